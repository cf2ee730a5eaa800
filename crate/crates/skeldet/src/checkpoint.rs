//! Versioned binary checkpoints: a JSON header (architecture, epoch,
//! schedule state, tensor shapes) followed by raw little-endian 64-bit
//! parameters and, optionally, optimizer velocity. Serialization is a pure
//! function of the contents, so identical training runs produce
//! byte-identical files.

use crate::error::{Error, Result};
use crate::net::{NetConfig, Network};
use crate::tensor::Tensor;
use crate::train::PlateauSchedule;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"SKDT";
const VERSION: u32 = 1;

/// Everything needed to resume or deploy a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Network,
    /// SGD momentum buffers, aligned with the network's parameter order.
    pub velocity: Option<Vec<Tensor>>,
    /// Completed epochs.
    pub epoch: usize,
    pub schedule: Option<PlateauSchedule>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    net: NetConfig,
    epoch: usize,
    schedule: Option<PlateauSchedule>,
    param_shapes: Vec<Vec<usize>>,
    has_velocity: bool,
}

pub fn to_bytes(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let params = ckpt.net.param_tensors();
    if let Some(vel) = &ckpt.velocity {
        if vel.len() != params.len()
            || vel.iter().zip(&params).any(|(v, p)| v.shape() != p.shape())
        {
            return Err(Error::Shape(
                "velocity tensors do not match network parameters".to_string(),
            ));
        }
    }
    let header = Header {
        net: ckpt.net.config().clone(),
        epoch: ckpt.epoch,
        schedule: ckpt.schedule.clone(),
        param_shapes: params.iter().map(|t| t.shape().to_vec()).collect(),
        has_velocity: ckpt.velocity.is_some(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Validation(format!("cannot serialize checkpoint header: {}", e)))?;

    let total: usize = params.iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(12 + header_json.len() + 8 * total * 2);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for t in &params {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(vel) = &ckpt.velocity {
        for t in vel {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |msg: &str| Error::Validation(format!("checkpoint: {}", msg));
    if bytes.len() < 12 {
        return Err(bad("file shorter than the fixed preamble"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {}", version)));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload_start = 12 + header_len;
    if bytes.len() < payload_start {
        return Err(bad("header extends past end of file"));
    }
    let header: Header = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| bad(&format!("invalid header: {}", e)))?;

    // Rebuild the network (seed irrelevant; every parameter is overwritten)
    // and verify the stored shapes actually belong to this architecture.
    let mut net = Network::init(header.net, 0)?;
    {
        let params = net.param_tensors();
        if header.param_shapes.len() != params.len() {
            return Err(bad(&format!(
                "{} tensors in header, architecture has {}",
                header.param_shapes.len(),
                params.len()
            )));
        }
        for (stored, actual) in header.param_shapes.iter().zip(&params) {
            if stored[..] != *actual.shape() {
                return Err(bad(&format!(
                    "stored shape {:?} does not match architecture shape {:?}",
                    stored,
                    actual.shape()
                )));
            }
        }
    }
    let total: usize = net.param_tensors().iter().map(|t| t.len()).sum();
    let copies = if header.has_velocity { 2 } else { 1 };
    let expected = payload_start + 8 * total * copies;
    if bytes.len() != expected {
        return Err(bad(&format!(
            "payload is {} bytes, expected {}",
            bytes.len() - payload_start,
            expected - payload_start
        )));
    }

    let mut cursor = payload_start;
    let read_f64 = |cursor: &mut usize| {
        let v = f64::from_le_bytes(bytes[*cursor..*cursor + 8].try_into().unwrap());
        *cursor += 8;
        v
    };
    for t in net.param_tensors_mut() {
        for v in t.data_mut() {
            *v = read_f64(&mut cursor);
        }
    }
    let velocity = if header.has_velocity {
        let mut vel = Vec::new();
        for t in net.param_tensors() {
            let mut vt = Tensor::zeros(t.shape());
            for v in vt.data_mut() {
                *v = read_f64(&mut cursor);
            }
            vel.push(vt);
        }
        Some(vel)
    } else {
        None
    };
    Ok(Checkpoint { net, velocity, epoch: header.epoch, schedule: header.schedule })
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    Ok(fs::write(path, to_bytes(ckpt)?)?)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::LayerSpec;
    use crate::train::TrainConfig;

    fn small_net(seed: u64) -> Network {
        let cfg = NetConfig {
            input: (10, 16, 3),
            backbone: vec![
                LayerSpec::Conv { out_channels: 4, kernel: (3, 3), stride: (1, 1), pad: (1, 1) },
                LayerSpec::Relu,
                LayerSpec::MaxPool { size: (2, 2), stride: (2, 2) },
                LayerSpec::MaxPool { size: (1, 2), stride: (1, 2) },
            ],
            head_layers: vec![2, 3],
            num_classes: 2,
            detection_kernel: (5, 1),
            aspect_ratios: vec![1.0, 3.0],
            layer_scales: vec![0.2, 0.5],
        };
        Network::init(cfg, seed).unwrap()
    }

    fn sample_checkpoint() -> Checkpoint {
        let net = small_net(5);
        let velocity: Vec<Tensor> = net
            .param_tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let mut v = Tensor::zeros(t.shape());
                for (j, x) in v.data_mut().iter_mut().enumerate() {
                    *x = (i * 31 + j) as f64 * 0.01 - 0.3;
                }
                v
            })
            .collect();
        let mut schedule = PlateauSchedule::new(&TrainConfig::default());
        schedule.observe(1.0);
        schedule.observe(1.2);
        Checkpoint { net, velocity: Some(velocity), epoch: 17, schedule: Some(schedule) }
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ckpt = sample_checkpoint();
        let bytes = to_bytes(&ckpt).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn serialization_is_byte_stable() {
        let ckpt = sample_checkpoint();
        let a = to_bytes(&ckpt).unwrap();
        let b = to_bytes(&from_bytes(&a).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn velocity_is_optional() {
        let ckpt = Checkpoint {
            net: small_net(6),
            velocity: None,
            epoch: 0,
            schedule: None,
        };
        let bytes = to_bytes(&ckpt).unwrap();
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert!(back.velocity.is_none());
    }

    #[test]
    fn corrupted_inputs_are_rejected() {
        let ckpt = sample_checkpoint();
        let bytes = to_bytes(&ckpt).unwrap();

        assert!(from_bytes(&bytes[..8]).is_err());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(from_bytes(&bad_magic).is_err());

        let mut bad_version = bytes.clone();
        bad_version[4] = 99;
        assert!(from_bytes(&bad_version).is_err());

        let mut bad_header = bytes.clone();
        bad_header[13] = b'!';
        assert!(from_bytes(&bad_header).is_err());
    }

    #[test]
    fn mismatched_velocity_rejected_on_save() {
        let net = small_net(5);
        let velocity = vec![Tensor::zeros(&[1])];
        let ckpt = Checkpoint { net, velocity: Some(velocity), epoch: 1, schedule: None };
        assert!(to_bytes(&ckpt).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint();
        save(&path, &ckpt).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back, ckpt);
    }
}
