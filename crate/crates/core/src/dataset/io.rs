//! Little-endian epoch file:
//!
//! ```text
//! "MTEQ" | u16 version
//! u32 window | u32 n_features | u64 epoch_size | u64 master_seed | u64 epoch_index
//! u8 mode | u8 power_feature | f64 power center | f64 power half-range | [u8; 32] config hash
//! u32 n_scenarios, then per scenario:
//!     f64 p_dbm | f64 rs_gbd | u32 n_spans | u64 seed | f64 scale_x | f64 scale_y | f64 rot_x | f64 rot_y
//! u32 scenario index per example
//! payload: f32 features (example-major), f32 targets
//! u32 CRC-32 of the payload
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EpochDataset, ModeKind, Scenario, ScenarioRecord};
use crate::binio::{check_magic_version, HashWriter, Sink, Source};
use crate::dsp::NormRecord;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"MTEQ";
pub const DATASET_VERSION: u16 = 1;

fn encode<W: Write>(d: &EpochDataset, w: W) -> Result<W> {
    let mut s = Sink::new(w);
    s.bytes(DATASET_MAGIC)?;
    s.u16(DATASET_VERSION)?;
    s.u32(d.window as u32)?;
    s.u32(d.n_features as u32)?;
    s.u64(d.len() as u64)?;
    s.u64(d.master_seed)?;
    s.u64(d.epoch_index)?;
    s.u8(d.mode.code())?;
    s.u8(d.power_feature as u8)?;
    s.f64s(&d.power_norm)?;
    s.bytes(&d.config_hash)?;
    s.u32(d.scenarios.len() as u32)?;
    for r in &d.scenarios {
        s.f64(r.scenario.p_dbm)?;
        s.f64(r.scenario.rs_gbd)?;
        s.u32(r.scenario.n_spans)?;
        s.u64(r.scenario.seed)?;
        s.f64s(&[r.norm.scale_x, r.norm.scale_y, r.norm.rotation_x_deg, r.norm.rotation_y_deg])?;
    }
    for &k in &d.scenario_index {
        s.u32(k)?;
    }
    s.crc = Some(crc32fast::Hasher::new());
    s.f32s(&d.features)?;
    s.f32s(&d.targets)?;
    let crc = s.crc.take().expect("set above").finalize();
    s.u32(crc)?;
    Ok(s.inner)
}

fn decode<R: Read>(r: R) -> Result<EpochDataset> {
    let mut s = Source::new(r);
    check_magic_version(&mut s, DATASET_MAGIC, DATASET_VERSION)?;
    let window = s.u32()? as usize;
    let n_features = s.u32()? as usize;
    let len = s.u64()? as usize;
    let master_seed = s.u64()?;
    let epoch_index = s.u64()?;
    let mode_code = s.u8()?;
    let mode = ModeKind::from_code(mode_code).ok_or_else(|| Error::Format(format!("unknown mode code {mode_code}")))?;
    let power_feature = match s.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::Format(format!("power flag {v} is not 0 or 1"))),
    };
    if n_features != 4 + power_feature as usize || window == 0 {
        return Err(Error::Format(format!(
            "inconsistent header: window {window}, {n_features} features, power flag {power_feature}"
        )));
    }
    let power_norm = [s.f64()?, s.f64()?];
    let config_hash = s.array::<32>()?;
    let n_scen = s.u32()? as usize;
    let mut scenarios = Vec::with_capacity(n_scen.min(1 << 20));
    for _ in 0..n_scen {
        let scenario = Scenario {
            p_dbm: s.f64()?,
            rs_gbd: s.f64()?,
            n_spans: s.u32()?,
            seed: s.u64()?,
        };
        let v = s.f64s(4)?;
        scenarios.push(ScenarioRecord {
            scenario,
            norm: NormRecord {
                scale_x: v[0],
                scale_y: v[1],
                rotation_x_deg: v[2],
                rotation_y_deg: v[3],
            },
        });
    }
    let mut scenario_index = Vec::with_capacity(len.min(1 << 24));
    for _ in 0..len {
        let k = s.u32()?;
        if k as usize >= n_scen {
            return Err(Error::Format(format!("scenario index {k} out of range")));
        }
        scenario_index.push(k);
    }
    s.crc = Some(crc32fast::Hasher::new());
    let features = s.f32s(len * window * n_features)?;
    let targets = s.f32s(2 * len)?;
    let computed = s.crc.take().expect("set above").finalize();
    let stored = s.u32()?;
    if computed != stored {
        return Err(Error::Format(format!(
            "payload checksum mismatch: stored {stored:08x}, computed {computed:08x}"
        )));
    }
    s.expect_end()?;
    Ok(EpochDataset {
        mode,
        window,
        n_features,
        master_seed,
        epoch_index,
        power_feature,
        power_norm,
        config_hash,
        scenarios,
        scenario_index,
        features,
        targets,
    })
}

pub fn save_dataset(d: &EpochDataset, path: impl AsRef<Path>) -> Result<()> {
    let w = encode(d, BufWriter::new(File::create(path)?))?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.sync_all()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<EpochDataset> {
    decode(BufReader::new(File::open(path)?))
}

/// Hex SHA-256 of the file that [`save_dataset`] would write.
pub fn dataset_digest(d: &EpochDataset) -> String {
    encode(d, HashWriter::default()).expect("hashing cannot fail").hex()
}
