//! Flat binary checkpoint format for the actor/critic parameter pair.
//!
//! Layout: 8-byte magic, five u32 shape fields, then each tensor of the
//! actor followed by the critic as `u64 rows, u64 cols, rows*cols f64`
//! little-endian values. Biases are stored as 1-row tensors.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array1;
use thiserror::Error;

use super::{ActorCriticParams, Dense, NetKind, NetParams, NetShape, Tensor2};

const MAGIC: &[u8; 8] = b"NSPCK001";

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint shape mismatch: {0}")]
    ShapeMismatch(String),
}

fn write_tensor<W: Write>(w: &mut W, t: &Tensor2) -> io::Result<()> {
    w.write_all(&(t.nrows() as u64).to_le_bytes())?;
    w.write_all(&(t.ncols() as u64).to_le_bytes())?;
    for v in t.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor2, NeuralError> {
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let rows = u64::from_le_bytes(buf8) as usize;
    r.read_exact(&mut buf8)?;
    let cols = u64::from_le_bytes(buf8) as usize;
    if rows.checked_mul(cols).map_or(true, |n| n > 1 << 28) {
        return Err(NeuralError::ShapeMismatch(format!(
            "implausible tensor {rows}x{cols}"
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut buf8)?;
        data.push(f64::from_le_bytes(buf8));
    }
    Tensor2::from_shape_vec((rows, cols), data)
        .map_err(|e| NeuralError::ShapeMismatch(e.to_string()))
}

fn write_dense<W: Write>(w: &mut W, d: &Dense) -> io::Result<()> {
    write_tensor(w, &d.w)?;
    let b = d.b.view().insert_axis(ndarray::Axis(0)).to_owned();
    write_tensor(w, &b)
}

fn read_dense<R: Read>(r: &mut R) -> Result<Dense, NeuralError> {
    let w = read_tensor(r)?;
    let b2 = read_tensor(r)?;
    if b2.nrows() != 1 {
        return Err(NeuralError::ShapeMismatch("bias must be 1-row".into()));
    }
    let b: Array1<f64> = b2.row(0).to_owned();
    Ok(Dense { w, b })
}

fn write_net<W: Write>(w: &mut W, p: &NetParams) -> io::Result<()> {
    for l in &p.gcn {
        write_dense(w, l)?;
    }
    write_dense(w, &p.nspr_dense)?;
    write_dense(w, &p.trunk)?;
    if let Some(h) = &p.head {
        write_dense(w, h)?;
    }
    Ok(())
}

fn read_net<R: Read>(
    r: &mut R,
    shape: &NetShape,
    kind: NetKind,
) -> Result<NetParams, NeuralError> {
    let mut gcn = Vec::with_capacity(shape.gcn_layers);
    let mut fan_in = shape.node_feat;
    for _ in 0..shape.gcn_layers {
        let l = read_dense(r)?;
        if l.w.nrows() != fan_in || l.w.ncols() != shape.gcn_width {
            return Err(NeuralError::ShapeMismatch("gcn layer".into()));
        }
        gcn.push(l);
        fan_in = shape.gcn_width;
    }
    let nspr_dense = read_dense(r)?;
    if nspr_dense.w.dim() != (shape.nspr_feat, shape.nspr_feat) {
        return Err(NeuralError::ShapeMismatch("request layer".into()));
    }
    let trunk = read_dense(r)?;
    if trunk.w.dim() != (shape.nodes, shape.trunk_in()) {
        return Err(NeuralError::ShapeMismatch("trunk layer".into()));
    }
    let head = match kind {
        NetKind::Actor => None,
        NetKind::Critic => {
            let h = read_dense(r)?;
            if h.w.dim() != (1, shape.nodes) {
                return Err(NeuralError::ShapeMismatch("critic head".into()));
            }
            Some(h)
        }
    };
    Ok(NetParams {
        gcn,
        nspr_dense,
        trunk,
        head,
    })
}

pub fn save_params<P: AsRef<Path>>(path: P, params: &ActorCriticParams) -> Result<(), NeuralError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    for v in [
        params.shape.nodes,
        params.shape.node_feat,
        params.shape.nspr_feat,
        params.shape.gcn_width,
        params.shape.gcn_layers,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    write_net(&mut w, &params.actor)?;
    write_net(&mut w, &params.critic)?;
    w.flush()?;
    Ok(())
}

pub fn load_params<P: AsRef<Path>>(path: P) -> Result<ActorCriticParams, NeuralError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NeuralError::BadMagic);
    }
    let mut buf4 = [0u8; 4];
    let mut fields = [0usize; 5];
    for f in &mut fields {
        r.read_exact(&mut buf4)?;
        *f = u32::from_le_bytes(buf4) as usize;
    }
    let shape = NetShape {
        nodes: fields[0],
        node_feat: fields[1],
        nspr_feat: fields[2],
        gcn_width: fields[3],
        gcn_layers: fields[4],
    };
    let actor = read_net(&mut r, &shape, NetKind::Actor)?;
    let critic = read_net(&mut r, &shape, NetKind::Critic)?;
    Ok(ActorCriticParams {
        shape,
        actor,
        critic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let shape = NetShape {
            nodes: 6,
            node_feat: 4,
            nspr_feat: 4,
            gcn_width: 7,
            gcn_layers: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let params = ActorCriticParams::init(shape, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_params(&path, &params).unwrap();
        let loaded = load_params(&path).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOTACKPTxxxxxxxxxxxxxxxx").unwrap();
        assert!(matches!(load_params(&path), Err(NeuralError::BadMagic)));
    }

    #[test]
    fn rejects_truncated_file() {
        let shape = NetShape {
            nodes: 3,
            node_feat: 4,
            nspr_feat: 4,
            gcn_width: 5,
            gcn_layers: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = ActorCriticParams::init(shape, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_params(&path, &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(load_params(&path).is_err());
    }
}
