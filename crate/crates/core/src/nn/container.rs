use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Activation, DenseLayer, Head, Mat, Network};
use crate::error::{Error, Result};

/// Flat binary container: 8-byte magic, u32 LE header length, JSON header
/// (shapes, activations, head map), then per layer the weights and biases
/// as little-endian f64 and the mask as an LSB-first bitset when present.
const MAGIC: &[u8; 8] = b"OMNINET1";

#[derive(Serialize, Deserialize)]
struct LayerMeta {
    rows: usize,
    cols: usize,
    act: Activation,
    masked: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    layers: Vec<LayerMeta>,
    heads: Vec<Head>,
}

pub fn write_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path, e);

    let header = Header {
        layers: net
            .layers
            .iter()
            .map(|l| LayerMeta {
                rows: l.w.rows,
                cols: l.w.cols,
                act: l.act,
                masked: l.mask.is_some(),
            })
            .collect(),
        heads: net.heads.clone(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    out.write_all(MAGIC).map_err(io_err)?;
    out.write_all(&(header_bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&header_bytes).map_err(io_err)?;

    for layer in &net.layers {
        for v in layer.w.data.iter().chain(&layer.b) {
            out.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        if let Some(mask) = &layer.mask {
            let mut bits = vec![0u8; mask.data.len().div_ceil(8)];
            for (k, v) in mask.data.iter().enumerate() {
                if *v != 0.0 {
                    bits[k / 8] |= 1 << (k % 8);
                }
            }
            out.write_all(&bits).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

pub fn read_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut input = std::io::BufReader::new(file);
    let io_err = |e| Error::io(path, e);

    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        if magic[..7] == MAGIC[..7] && magic[7].is_ascii_digit() {
            return Err(Error::FormatVersion {
                found: u32::from(magic[7] - b'0'),
                expected: 1,
            });
        }
        return Err(Error::Parse("not a network container".into()));
    }
    let mut len4 = [0u8; 4];
    input.read_exact(&mut len4).map_err(io_err)?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(len4) as usize];
    input.read_exact(&mut header_bytes).map_err(io_err)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;

    fn read_f64s(input: &mut impl Read, count: usize, path: &Path) -> Result<Vec<f64>> {
        let mut buf = vec![0u8; count * 8];
        input.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    let mut layers = Vec::with_capacity(header.layers.len());
    for meta in &header.layers {
        if meta.rows == 0 || meta.cols == 0 {
            return Err(Error::Parse("zero-sized layer in container".into()));
        }
        if let Some(prev) = layers.last() {
            let prev: &DenseLayer = prev;
            if prev.w.rows != meta.cols {
                return Err(Error::Parse("layer dimensions do not chain".into()));
            }
        }
        let w = Mat {
            rows: meta.rows,
            cols: meta.cols,
            data: read_f64s(&mut input, meta.rows * meta.cols, path)?,
        };
        let b = read_f64s(&mut input, meta.rows, path)?;
        let mask = if meta.masked {
            let mut bits = vec![0u8; w.data.len().div_ceil(8)];
            input.read_exact(&mut bits).map_err(io_err)?;
            let data = (0..w.data.len())
                .map(|k| f64::from(bits[k / 8] >> (k % 8) & 1))
                .collect();
            Some(Mat { rows: meta.rows, cols: meta.cols, data })
        } else {
            None
        };
        layers.push(DenseLayer { w, b, mask, act: meta.act });
    }
    let mut trailer = [0u8; 1];
    if input.read(&mut trailer).map_err(io_err)? != 0 {
        return Err(Error::Parse("trailing bytes after network payload".into()));
    }

    let net = Network { layers, heads: header.heads };
    net.check_heads()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::{forward, DropoutSpec};
    use crate::seed;
    use rand::Rng;

    fn masked_net(tag: u64) -> Network {
        let mut rng = seed::rng(seed::derive(tag, seed::stage::MODEL_INIT));
        let heads = vec![
            Head::Softmax { attr: 0, lo: 0, hi: 4 },
            Head::Linear { attr: 1, col: 4 },
        ];
        let mut net = Network::new(&[3, 6, 5], heads, &mut rng).unwrap();
        let mut mask = Mat::zeros(6, 3);
        for v in &mut mask.data {
            *v = f64::from(rng.gen_bool(0.5));
        }
        net.layers[0].set_mask(mask);
        net
    }

    #[test]
    fn container_round_trips_bitwise() {
        let net = masked_net(41);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        write_network(&net, &path).unwrap();
        let back = read_network(&path).unwrap();
        assert_eq!(net, back);

        let r = seed::rng(7);
        let batch = Mat::from_rows(&[vec![0.1, -0.4, 0.9]]);
        let (a, _) = forward(&net, &batch, &DropoutSpec::none(1), &mut r.clone()).unwrap();
        let (b, _) = forward(&back, &batch, &DropoutSpec::none(1), &mut r.clone()).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn reader_rejects_corruption() {
        let net = masked_net(42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        write_network(&net, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        let truncated = dir.path().join("trunc.bin");
        std::fs::write(&truncated, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_network(&truncated).is_err());

        let mut wrong = bytes.clone();
        wrong[7] = b'2';
        let versioned = dir.path().join("v2.bin");
        std::fs::write(&versioned, &wrong).unwrap();
        assert!(matches!(
            read_network(&versioned),
            Err(Error::FormatVersion { found: 2, expected: 1 })
        ));

        let mut padded = bytes;
        padded.push(0);
        let trailing = dir.path().join("pad.bin");
        std::fs::write(&trailing, &padded).unwrap();
        assert!(read_network(&trailing).is_err());
    }
}
