//! Binary model format.
//!
//! All integers little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 4 | magic `TQNM` |
//! | 4 | format version (u32) |
//! | 7×4 | in_channels, height, width, hidden, layers, features, actions (u32) |
//! | 4 | kernel: 0 pointwise, 1 hex (u32) |
//! | 8 | init seed (u64) |
//! | 8 | parameter count (u64) |
//! | 4·count | parameters as f32 |
//!
//! Parameters follow [`Layers::tensors`] order: input convolution, residual
//! layers, head, output; each as a row-major `[out, in]` weight matrix followed
//! by its bias. Convolution weight columns are `tap·in_channels + channel`
//! (tap 0 is the center, then E, NE, NW, W, SW, SE). The head's input columns
//! are `cell·hidden + channel` with cells in row-major board order.

use std::io::{Read, Write};
use std::path::Path;

use super::{Architecture, KernelKind, Layers, NetError, QNetwork, Real};

pub const MODEL_MAGIC: &[u8; 4] = b"TQNM";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model<T: Real, W: Write>(net: &QNetwork<T>, mut w: W) -> Result<(), NetError> {
    let a = &net.arch;
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&MODEL_VERSION.to_le_bytes())?;
    for v in [a.in_channels, a.height, a.width, a.hidden, a.layers, a.features, a.actions] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let kernel: u32 = match a.kernel {
        KernelKind::Pointwise => 0,
        KernelKind::Hex => 1,
    };
    w.write_all(&kernel.to_le_bytes())?;
    w.write_all(&net.seed.to_le_bytes())?;
    w.write_all(&(net.params.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(net.params.len() * 4);
    for t in net.params.tensors() {
        for v in t {
            buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn take<const N: usize>(bytes: &[u8], pos: &mut usize) -> Result<[u8; N], NetError> {
    let end = *pos + N;
    let out = bytes
        .get(*pos..end)
        .ok_or_else(|| NetError::Format(format!("truncated at byte {}", *pos)))?;
    *pos = end;
    Ok(out.try_into().unwrap())
}

pub fn read_model<R: Read>(mut r: R) -> Result<QNetwork<f32>, NetError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    if &take::<4>(&bytes, &mut pos)? != MODEL_MAGIC {
        return Err(NetError::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&bytes, &mut pos)?);
    if version != MODEL_VERSION {
        return Err(NetError::Format(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 7];
    for d in &mut dims {
        *d = u32::from_le_bytes(take(&bytes, &mut pos)?) as usize;
    }
    let kernel = match u32::from_le_bytes(take(&bytes, &mut pos)?) {
        0 => KernelKind::Pointwise,
        1 => KernelKind::Hex,
        k => return Err(NetError::Format(format!("unknown kernel {k}"))),
    };
    let arch = Architecture {
        in_channels: dims[0],
        height: dims[1],
        width: dims[2],
        hidden: dims[3],
        layers: dims[4],
        features: dims[5],
        actions: dims[6],
        kernel,
    };
    let seed = u64::from_le_bytes(take(&bytes, &mut pos)?);
    let count = u64::from_le_bytes(take(&bytes, &mut pos)?) as usize;
    if count != arch.param_count() {
        return Err(NetError::Format(format!(
            "parameter count {count} does not match architecture ({})",
            arch.param_count()
        )));
    }
    if bytes.len() != pos + 4 * count {
        return Err(NetError::Format(format!(
            "expected {} parameter bytes, found {}",
            4 * count,
            bytes.len() - pos
        )));
    }
    let mut params = Layers::<f32>::zeros(&arch);
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = f32::from_le_bytes(take(&bytes, &mut pos)?);
        }
    }
    Ok(QNetwork::from_params(arch, seed, params))
}

/// Writes to a temporary sibling and renames it into place.
pub fn save_model<T: Real>(net: &QNetwork<T>, path: &Path) -> Result<(), NetError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        write_model(net, &mut f)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<QNetwork<f32>, NetError> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}
