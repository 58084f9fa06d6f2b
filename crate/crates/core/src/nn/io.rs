//! Little-endian model file:
//!
//! ```text
//! "MTEQM" | u16 version
//! u32 n_layers | u32 hidden | u32 input_features | u32 window | u32 output_dim
//! u8 mode | u64 master_seed | u64 epochs_completed | [u8; 32] config hash
//! u64 n_params | f64 params
//! u64 adam step | f64 lr | f64 beta1 | f64 beta2 | f64 eps | f64 m | f64 v
//! u32 CRC-32 of everything above
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::adam::{AdamHyper, AdamState};
use super::model::{EqualizerModel, Layout, ModelConfig, Provenance};
use crate::binio::{check_magic_version, Sink, Source};
use crate::dataset::ModeKind;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 5] = b"MTEQM";
pub const MODEL_VERSION: u16 = 1;

fn encode<W: Write>(m: &EqualizerModel, w: W) -> Result<W> {
    let mut s = Sink::new(w);
    s.crc = Some(crc32fast::Hasher::new());
    s.bytes(MODEL_MAGIC)?;
    s.u16(MODEL_VERSION)?;
    let c = &m.config;
    for v in [c.n_layers, c.hidden, c.input_features, c.window, c.output_dim] {
        s.u32(v as u32)?;
    }
    let p = &m.provenance;
    s.u8(p.mode.code())?;
    s.u64(p.master_seed)?;
    s.u64(p.epochs_completed)?;
    s.bytes(&p.config_hash)?;
    s.u64(m.params.len() as u64)?;
    s.f64s(&m.params)?;
    let a = &m.adam;
    s.u64(a.t)?;
    s.f64s(&[a.hyper.lr, a.hyper.beta1, a.hyper.beta2, a.hyper.eps])?;
    s.f64s(&a.m)?;
    s.f64s(&a.v)?;
    let crc = s.crc.take().expect("set above").finalize();
    s.u32(crc)?;
    Ok(s.inner)
}

fn decode<R: Read>(r: R) -> Result<EqualizerModel> {
    let mut s = Source::new(r);
    s.crc = Some(crc32fast::Hasher::new());
    check_magic_version(&mut s, MODEL_MAGIC, MODEL_VERSION)?;
    let mut dims = [0usize; 5];
    for d in &mut dims {
        *d = s.u32()? as usize;
    }
    let config = ModelConfig {
        n_layers: dims[0],
        hidden: dims[1],
        input_features: dims[2],
        window: dims[3],
        output_dim: dims[4],
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("stored model configuration is invalid: {e}")))?;
    let code = s.u8()?;
    let provenance = Provenance {
        mode: ModeKind::from_code(code).ok_or_else(|| Error::Format(format!("unknown mode code {code}")))?,
        master_seed: s.u64()?,
        epochs_completed: s.u64()?,
        config_hash: s.array()?,
    };
    let layout = Layout::new(&config);
    let n = s.u64()? as usize;
    if n != layout.total {
        return Err(Error::Format(format!(
            "{n} parameters stored, configuration needs {}",
            layout.total
        )));
    }
    let params = s.f64s(n)?;
    let t = s.u64()?;
    let h = s.f64s(4)?;
    let m = s.f64s(n)?;
    let v = s.f64s(n)?;
    let computed = s.crc.take().expect("set above").finalize();
    let stored = s.u32()?;
    if computed != stored {
        return Err(Error::Format(format!(
            "checksum mismatch: stored {stored:08x}, computed {computed:08x}"
        )));
    }
    s.expect_end()?;
    Ok(EqualizerModel {
        config,
        layout,
        params,
        adam: AdamState {
            m,
            v,
            t,
            hyper: AdamHyper {
                lr: h[0],
                beta1: h[1],
                beta2: h[2],
                eps: h[3],
            },
        },
        provenance,
    })
}

pub fn save_model(m: &EqualizerModel, path: impl AsRef<Path>) -> Result<()> {
    let w = encode(m, BufWriter::new(File::create(path)?))?;
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.sync_all()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EqualizerModel> {
    decode(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Precision;

    fn model() -> EqualizerModel {
        let cfg = ModelConfig { n_layers: 2, hidden: 3, input_features: 5, window: 7, output_dim: 2 };
        let mut m = EqualizerModel::new(cfg, 3).unwrap();
        m.adam.t = 12;
        m.adam.m.iter_mut().enumerate().for_each(|(k, v)| *v = k as f64 * 1e-3);
        m.adam.v.iter_mut().enumerate().for_each(|(k, v)| *v = k as f64 * 1e-6);
        m.provenance = Provenance {
            mode: ModeKind::MtlPower,
            master_seed: 99,
            epochs_completed: 4,
            config_hash: [7; 32],
        };
        m
    }

    #[test]
    fn round_trip_preserves_predictions() {
        let m = model();
        let b = encode(&m, Vec::new()).unwrap();
        assert_eq!(&b[..5], b"MTEQM");
        let back = decode(&b[..]).unwrap();
        assert_eq!(back, m);
        let feats: Vec<f32> = (0..3 * 35).map(|k| (k as f32 * 0.37).sin()).collect();
        let a = m.predict(&feats, Precision::F64).unwrap();
        let c = back.predict(&feats, Precision::F64).unwrap();
        assert!(a.iter().zip(&c).all(|(x, y)| x.re.to_bits() == y.re.to_bits() && x.im.to_bits() == y.im.to_bits()));
    }

    #[test]
    fn damaged_files_are_rejected() {
        let b = encode(&model(), Vec::new()).unwrap();
        for cut in [2, 7, 40, b.len() / 2, b.len() - 1] {
            assert!(matches!(decode(&b[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut flip = b.clone();
        flip[100] ^= 0x10;
        assert!(matches!(decode(&flip[..]), Err(Error::Format(_))));
        let mut newer = b.clone();
        newer[5] = 9;
        assert!(matches!(decode(&newer[..]), Err(Error::Format(m)) if m.contains("newer")));
    }
}
