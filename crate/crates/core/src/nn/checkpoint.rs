//! Flat binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! b"SDAM" | version: u32 | n_widths: u32 | widths: u32 * n_widths
//!         | activation tag: u8 * (n_widths - 1)
//!         | per layer: weights (row-major out x in) f64, biases f64
//! ```

use std::io::{Read, Write};

use super::{Activation, Mlp};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SDAM";
pub const FORMAT_VERSION: u32 = 1;

pub fn write_mlp<W: Write>(net: &Mlp, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let widths = net.widths();
    write_u32(&mut w, widths.len())?;
    for width in &widths {
        write_u32(&mut w, *width)?;
    }
    for layer in net.layers() {
        w.write_all(&[layer.activation().tag()])?;
    }
    for layer in net.layers() {
        for x in layer.weights().iter().chain(layer.biases()) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_mlp<R: Read>(mut r: R) -> Result<Mlp> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r)? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Checkpoint(format!("implausible layer count {n}")));
    }
    let widths = (0..n)
        .map(|_| read_u32(&mut r).map(|x| x as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut activations = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        activations.push(
            Activation::from_tag(tag[0])
                .ok_or_else(|| Error::Checkpoint(format!("unknown activation tag {}", tag[0])))?,
        );
    }
    let mut params = Vec::with_capacity(n - 1);
    for pair in widths.windows(2) {
        let weights = read_f64s(&mut r, pair[0] * pair[1])?;
        let biases = read_f64s(&mut r, pair[1])?;
        params.push((weights, biases));
    }
    Mlp::from_layers(&widths, &activations, params)
}

pub fn to_bytes(net: &Mlp) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + net.param_count() * 8);
    write_mlp(net, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn from_bytes(bytes: &[u8]) -> Result<Mlp> {
    read_mlp(bytes)
}

pub fn save(net: &Mlp, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_mlp(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<Mlp> {
    let file = std::fs::File::open(path)?;
    read_mlp(std::io::BufReader::new(file))
}

pub(crate) fn write_u32<W: Write>(w: &mut W, x: usize) -> Result<()> {
    let x = u32::try_from(x).map_err(|_| Error::Checkpoint(format!("{x} exceeds u32")))?;
    w.write_all(&x.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| read_f64(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn header_layout() {
        let net = Mlp::zeros(&[2, 3, 1], Activation::Relu, Activation::Tanh).unwrap();
        let bytes = to_bytes(&net);
        assert_eq!(&bytes[..4], b"SDAM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(bytes[24..26], [1, 2]);
        assert_eq!(bytes.len(), 26 + 8 * net.param_count());
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[7, 16, 16, 3], Activation::Relu, Activation::Tanh, &mut rng).unwrap();
        let back = from_bytes(&to_bytes(&net)).unwrap();
        assert_eq!(back.widths(), net.widths());
        assert_eq!(back.activations(), net.activations());
        assert!(back
            .params()
            .zip(net.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn corrupt_input_rejected() {
        assert!(from_bytes(b"NOPE\x01\x00\x00\x00").is_err());
        let net = Mlp::zeros(&[2, 2], Activation::Relu, Activation::Identity).unwrap();
        let bytes = to_bytes(&net);
        assert!(from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
