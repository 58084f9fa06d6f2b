use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Namespace, Rng};

/// One transmission configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub p_dbm: f64,
    pub rs_gbd: f64,
    pub n_spans: u32,
    pub seed: u64,
}

impl Scenario {
    pub fn new(p_dbm: f64, rs_gbd: f64, n_spans: u32, seed: u64) -> Self {
        Scenario {
            p_dbm,
            rs_gbd,
            n_spans,
            seed,
        }
    }

    pub fn symbol_rate_hz(&self) -> f64 {
        self.rs_gbd * 1e9
    }

    pub fn validate(&self, bounds: &ScenarioBounds) -> Result<()> {
        bounds.check(self.p_dbm, self.rs_gbd, self.n_spans, "scenario")
    }

    pub fn same_parameters(&self, other: &Scenario) -> bool {
        self.p_dbm == other.p_dbm && self.rs_gbd == other.rs_gbd && self.n_spans == other.n_spans
    }
}

/// Admissible scenario ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioBounds {
    pub p_dbm: (f64, f64),
    pub rs_gbd: (f64, f64),
    pub n_spans: (u32, u32),
}

impl ScenarioBounds {
    /// -1..5 dBm, 30..70 GBd, 10..50 spans.
    pub const FULL: ScenarioBounds = ScenarioBounds {
        p_dbm: (-1.0, 5.0),
        rs_gbd: (30.0, 70.0),
        n_spans: (10, 50),
    };

    /// The reduced-cost preset keeps power and rate ranges but allows short
    /// links down to a single span.
    pub const DESK: ScenarioBounds = ScenarioBounds {
        p_dbm: (-1.0, 5.0),
        rs_gbd: (30.0, 70.0),
        n_spans: (1, 50),
    };

    pub fn check(&self, p_dbm: f64, rs_gbd: f64, n_spans: u32, path: &str) -> Result<()> {
        if !(p_dbm >= self.p_dbm.0 && p_dbm <= self.p_dbm.1) {
            return Err(Error::config(
                format!("{path}.p_dbm"),
                format!("{p_dbm} outside [{}, {}] dBm", self.p_dbm.0, self.p_dbm.1),
            ));
        }
        if !(rs_gbd >= self.rs_gbd.0 && rs_gbd <= self.rs_gbd.1) {
            return Err(Error::config(
                format!("{path}.rs_gbd"),
                format!("{rs_gbd} outside [{}, {}] GBd", self.rs_gbd.0, self.rs_gbd.1),
            ));
        }
        if !(n_spans >= self.n_spans.0 && n_spans <= self.n_spans.1) {
            return Err(Error::config(
                format!("{path}.n_spans"),
                format!("{n_spans} outside [{}, {}]", self.n_spans.0, self.n_spans.1),
            ));
        }
        Ok(())
    }
}

/// The five training regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeKind {
    /// All three axes fixed.
    StlFixed,
    /// Span count varies.
    MtlSpans,
    /// Launch power varies.
    MtlPower,
    /// Symbol rate varies.
    MtlRate,
    /// All three vary.
    Universal,
}

impl ModeKind {
    pub const ALL: [ModeKind; 5] = [
        ModeKind::MtlSpans,
        ModeKind::MtlPower,
        ModeKind::MtlRate,
        ModeKind::Universal,
        ModeKind::StlFixed,
    ];

    pub fn code(self) -> u8 {
        match self {
            ModeKind::StlFixed => 0,
            ModeKind::MtlSpans => 1,
            ModeKind::MtlPower => 2,
            ModeKind::MtlRate => 3,
            ModeKind::Universal => 4,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => ModeKind::StlFixed,
            1 => ModeKind::MtlSpans,
            2 => ModeKind::MtlPower,
            3 => ModeKind::MtlRate,
            4 => ModeKind::Universal,
            _ => return None,
        })
    }

    pub fn varies_spans(self) -> bool {
        matches!(self, ModeKind::MtlSpans | ModeKind::Universal)
    }

    pub fn varies_power(self) -> bool {
        matches!(self, ModeKind::MtlPower | ModeKind::Universal)
    }

    pub fn varies_rate(self) -> bool {
        matches!(self, ModeKind::MtlRate | ModeKind::Universal)
    }

    pub fn is_multi_task(self) -> bool {
        self != ModeKind::StlFixed
    }

    /// The launch power is appended as a fifth input feature only for the
    /// power-varying regime.
    pub fn default_power_feature(self) -> bool {
        self == ModeKind::MtlPower
    }

    /// Epoch budget of the full recipe.
    pub fn full_epochs(self) -> usize {
        if self == ModeKind::Universal {
            1200
        } else {
            1000
        }
    }
}

/// Values of the axes a regime holds fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedAxes {
    pub p_dbm: f64,
    pub rs_gbd: f64,
    pub n_spans: u32,
}

impl Default for FixedAxes {
    fn default() -> Self {
        FixedAxes {
            p_dbm: 5.0,
            rs_gbd: 40.0,
            n_spans: 50,
        }
    }
}

/// Discrete values a varied axis is drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGrid {
    pub n_spans: Vec<u32>,
    pub p_dbm: Vec<f64>,
    pub rs_gbd: Vec<f64>,
}

impl ScenarioGrid {
    /// Spans 10..=50 step 5, power -1..=5 step 1, rate 30..=70 step 5.
    pub fn full() -> Self {
        ScenarioGrid {
            n_spans: (10..=50).step_by(5).collect(),
            p_dbm: (-1..=5).map(f64::from).collect(),
            rs_gbd: (30..=70).step_by(5).map(f64::from).collect(),
        }
    }

    /// Spans 2..=10 step 2; power and rate as the full grid.
    pub fn desk() -> Self {
        ScenarioGrid {
            n_spans: vec![2, 4, 6, 8, 10],
            ..Self::full()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerMode {
    pub kind: ModeKind,
    pub fixed: FixedAxes,
    pub grid: ScenarioGrid,
}

impl SamplerMode {
    pub fn full(kind: ModeKind) -> Self {
        SamplerMode {
            kind,
            fixed: FixedAxes::default(),
            grid: ScenarioGrid::full(),
        }
    }

    pub fn validate(&self, bounds: &ScenarioBounds) -> Result<()> {
        let k = self.kind;
        let f = &self.fixed;
        if !k.varies_power() {
            bounds.check(f.p_dbm, 40.0, bounds.n_spans.0, "sampler.fixed")?;
        }
        if !k.varies_rate() {
            bounds.check(bounds.p_dbm.0, f.rs_gbd, bounds.n_spans.0, "sampler.fixed")?;
        }
        if !k.varies_spans() {
            bounds.check(bounds.p_dbm.0, 40.0, f.n_spans, "sampler.fixed")?;
        }
        let g = &self.grid;
        if k.varies_spans() {
            if g.n_spans.is_empty() {
                return Err(Error::config("sampler.grid.n_spans", "must not be empty"));
            }
            for &n in &g.n_spans {
                bounds.check(bounds.p_dbm.0, 40.0, n, "sampler.grid")?;
            }
        }
        if k.varies_power() {
            if g.p_dbm.is_empty() {
                return Err(Error::config("sampler.grid.p_dbm", "must not be empty"));
            }
            for &p in &g.p_dbm {
                bounds.check(p, 40.0, bounds.n_spans.0, "sampler.grid")?;
            }
        }
        if k.varies_rate() {
            if g.rs_gbd.is_empty() {
                return Err(Error::config("sampler.grid.rs_gbd", "must not be empty"));
            }
            for &r in &g.rs_gbd {
                bounds.check(bounds.p_dbm.0, r, bounds.n_spans.0, "sampler.grid")?;
            }
        }
        Ok(())
    }
}

fn pick<T: Copy>(values: &[T], rng: &mut Rng) -> T {
    values[rng.random_range(0..values.len())]
}

/// Draw one training scenario. Varied axes are uniform over their grid;
/// the scenario seed is tagged with the training namespace.
pub fn sample_scenario(mode: &SamplerMode, rng: &mut Rng) -> Scenario {
    let k = mode.kind;
    let n_spans = if k.varies_spans() {
        pick(&mode.grid.n_spans, rng)
    } else {
        mode.fixed.n_spans
    };
    let p_dbm = if k.varies_power() {
        pick(&mode.grid.p_dbm, rng)
    } else {
        mode.fixed.p_dbm
    };
    let rs_gbd = if k.varies_rate() {
        pick(&mode.grid.rs_gbd, rng)
    } else {
        mode.fixed.rs_gbd
    };
    let seed = Namespace::Train.tag_seed(rng.random());
    Scenario {
        p_dbm,
        rs_gbd,
        n_spans,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::collections::HashMap;

    #[test]
    fn stl_is_fixed() {
        let m = SamplerMode::full(ModeKind::StlFixed);
        let mut r = rng::rng(1);
        for _ in 0..100 {
            let s = sample_scenario(&m, &mut r);
            assert_eq!((s.rs_gbd, s.n_spans, s.p_dbm), (40.0, 50, 5.0));
            assert_eq!(Namespace::of(s.seed), Some(Namespace::Train));
        }
    }

    #[test]
    fn single_axis_modes_hold_other_axes() {
        let mut r = rng::rng(2);
        for _ in 0..200 {
            let s = sample_scenario(&SamplerMode::full(ModeKind::MtlSpans), &mut r);
            assert!(s.rs_gbd == 40.0 && s.p_dbm == 5.0);
            assert!(s.n_spans % 5 == 0 && (10..=50).contains(&s.n_spans));
            let s = sample_scenario(&SamplerMode::full(ModeKind::MtlPower), &mut r);
            assert!(s.rs_gbd == 40.0 && s.n_spans == 50);
            let s = sample_scenario(&SamplerMode::full(ModeKind::MtlRate), &mut r);
            assert!(s.p_dbm == 5.0 && s.n_spans == 50);
        }
    }

    #[test]
    fn universal_is_uniform_over_grid() {
        // chi-square over the 9 x 7 x 9 grid; 10^4 draws
        let m = SamplerMode::full(ModeKind::Universal);
        let mut r = rng::rng(3);
        let n = 10_000;
        let mut counts: HashMap<(u32, i64, i64), usize> = HashMap::new();
        for _ in 0..n {
            let s = sample_scenario(&m, &mut r);
            *counts.entry((s.n_spans, s.p_dbm as i64, s.rs_gbd as i64)).or_default() += 1;
        }
        let cells = 9 * 7 * 9;
        assert_eq!(counts.len(), cells, "every grid point hit");
        let e = n as f64 / cells as f64;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // dof = 566; mean 566, sd sqrt(2*566) = 33.6
        let dof = (cells - 1) as f64;
        assert!((chi2 - dof).abs() < 3.0 * (2.0 * dof).sqrt(), "chi2 {chi2}");
        // each marginal axis uniform within 3 sigma
        for (axis, size) in [(0usize, 9usize), (1, 7), (2, 9)] {
            let mut marg: HashMap<i64, usize> = HashMap::new();
            for (&(a, b, c), &v) in &counts {
                let key = [a as i64, b, c][axis];
                *marg.entry(key).or_default() += v;
            }
            let p = 1.0 / size as f64;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            for &v in marg.values() {
                assert!((v as f64 - n as f64 * p).abs() < 3.0 * sd + 1.0);
            }
        }
    }

    #[test]
    fn bounds_name_the_field() {
        let s = Scenario::new(6.0, 40.0, 50, 0);
        match s.validate(&ScenarioBounds::FULL) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "scenario.p_dbm"),
            other => panic!("{other:?}"),
        }
        let s = Scenario::new(5.0, 40.0, 2, 0);
        assert!(s.validate(&ScenarioBounds::FULL).is_err());
        assert!(s.validate(&ScenarioBounds::DESK).is_ok());
    }

    #[test]
    fn mode_metadata() {
        assert_eq!(ModeKind::Universal.full_epochs(), 1200);
        assert_eq!(ModeKind::MtlSpans.full_epochs(), 1000);
        assert!(ModeKind::MtlPower.default_power_feature());
        for k in ModeKind::ALL {
            assert_eq!(ModeKind::from_code(k.code()), Some(k));
        }
    }
}
