//! Policy checkpoints.
//!
//! ```text
//! magic    b"CFPL"
//! version  u16 (currently 1)
//! header   u32 length + JSON {kind, config, target_rtg, reward_mode, classifier_variant}
//! tensors  u32 count, then per tensor:
//!          u32 name length + utf-8 name, u32 rows, u32 cols, rows*cols f64
//! ```
//! Integers and floats are little-endian. Tensors are written in creation
//! order and must match the layout implied by the header's config.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{ClassifierVariant, PolicyConfig, PolicyError, PolicyKind, TrainedPolicy};
use crate::trajgen::RewardMode;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CFPL";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    kind: PolicyKind,
    config: PolicyConfig,
    target_rtg: f64,
    reward_mode: Option<RewardMode>,
    classifier_variant: ClassifierVariant,
}

fn bad(msg: impl Into<String>) -> PolicyError {
    PolicyError::Checkpoint(msg.into())
}

pub(super) fn write<W: Write>(p: &TrainedPolicy, w: &mut W) -> Result<(), PolicyError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u16::<LE>(CHECKPOINT_VERSION)?;
    let header = serde_json::to_vec(&Header {
        kind: p.kind,
        config: p.config.clone(),
        target_rtg: p.target_rtg,
        reward_mode: p.reward_mode,
        classifier_variant: p.classifier_variant,
    })
    .map_err(|e| bad(e.to_string()))?;
    w.write_u32::<LE>(header.len() as u32)?;
    w.write_all(&header)?;
    w.write_u32::<LE>(p.store.len() as u32)?;
    for (name, m) in p.store.names.iter().zip(&p.store.values) {
        w.write_u32::<LE>(name.len() as u32)?;
        w.write_all(name.as_bytes())?;
        w.write_u32::<LE>(m.nrows() as u32)?;
        w.write_u32::<LE>(m.ncols() as u32)?;
        for &x in m.iter() {
            w.write_f64::<LE>(x)?;
        }
    }
    Ok(())
}

pub(super) fn read<R: Read>(r: &mut R) -> Result<TrainedPolicy, PolicyError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("not a policy checkpoint"));
    }
    let version = r.read_u16::<LE>()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let mut header = vec![0u8; r.read_u32::<LE>()? as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header).map_err(|e| bad(e.to_string()))?;
    let mut policy = TrainedPolicy::init(header.kind, header.config)?;
    policy.target_rtg = header.target_rtg;
    policy.reward_mode = header.reward_mode;
    policy.classifier_variant = header.classifier_variant;
    let n = r.read_u32::<LE>()? as usize;
    if n != policy.store.len() {
        return Err(bad(format!("expected {} tensors, found {n}", policy.store.len())));
    }
    for i in 0..n {
        let mut name = vec![0u8; r.read_u32::<LE>()? as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("tensor name is not utf-8"))?;
        let (rows, cols) = (r.read_u32::<LE>()? as usize, r.read_u32::<LE>()? as usize);
        let target = &mut policy.store.values[i];
        if policy.store.names[i] != name || target.dim() != (rows, cols) {
            return Err(bad(format!(
                "tensor {i} is {name} {rows}x{cols}, expected {} {:?}",
                policy.store.names[i],
                target.dim()
            )));
        }
        let mut buf = vec![0f64; rows * cols];
        r.read_f64_into::<LE>(&mut buf)?;
        target.as_slice_mut().expect("standard layout").copy_from_slice(&buf);
    }
    Ok(policy)
}

pub(super) fn save(p: &TrainedPolicy, path: &Path) -> Result<(), PolicyError> {
    let mut w = BufWriter::new(File::create(path)?);
    write(p, &mut w)?;
    w.flush()?;
    Ok(())
}

pub(super) fn load(path: &Path) -> Result<TrainedPolicy, PolicyError> {
    read(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rejects_garbage() {
        let mut p = TrainedPolicy::init(PolicyKind::Classifier, PolicyConfig::tiny()).unwrap();
        p.target_rtg = 0.77;
        let mut buf = Vec::new();
        write(&p, &mut buf).unwrap();
        assert_eq!(read(&mut buf.as_slice()).unwrap(), p);
        let mut wrong = buf.clone();
        wrong[0] = b'Z';
        assert!(matches!(read(&mut wrong.as_slice()), Err(PolicyError::Checkpoint(_))));
        assert!(read(&mut &buf[..buf.len() - 3]).is_err());
    }
}
