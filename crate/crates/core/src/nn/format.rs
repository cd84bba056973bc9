//! Binary model file.
//!
//! ```text
//! "CBCD"                      4 bytes magic
//! version                     u16 LE
//! 3 x network record          g, gr, gb in that order
//!
//! network record:
//!   tag                       u8   (0 = g, 1 = gr, 2 = gb)
//!   input channels            u16 LE
//!   layer count               u16 LE
//!   layer count x descriptor:
//!     kind                    u8   (0 input, 1 hidden, 2 output)
//!     cin, cout               u16 LE each
//!     dilation                u8
//!     skip count              u8
//!     skip indices            u16 LE each
//!   weights, f32 LE, layer by layer:
//!     kernel [3, 3, cin, cout] row-major, bias [cout],
//!     then gamma, beta, running mean, running variance for hidden layers
//! ```
//!
//! Weights are held as `f64` in memory and rounded to `f32` on write, so a
//! file read back and written again is byte-identical.

use super::spec::{LayerKind, LayerSpec, NetworkSpec, Target};
use super::weights::{BatchNorm, LayerWeights, NetworkWeights};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CBCD";
pub const FORMAT_VERSION: u16 = 1;

fn put_u16(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u16::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u16")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn put_u8(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u8::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u8")))?;
    out.push(v);
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, vals: &[f64]) {
    for &v in vals {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn encode_network(out: &mut Vec<u8>, spec: &NetworkSpec, w: &NetworkWeights) -> Result<()> {
    w.check(spec)?;
    out.push(spec.target.tag());
    put_u16(out, spec.input_channels)?;
    put_u16(out, spec.layers.len())?;
    for l in &spec.layers {
        out.push(l.kind.code());
        put_u16(out, l.in_channels)?;
        put_u16(out, l.out_channels)?;
        put_u8(out, l.dilation)?;
        put_u8(out, l.skip_sources.len())?;
        for &s in &l.skip_sources {
            put_u16(out, s)?;
        }
    }
    for lw in &w.layers {
        put_f32s(out, &lw.kernel);
        put_f32s(out, &lw.bias);
        if let Some(bn) = &lw.bn {
            put_f32s(out, &bn.gamma);
            put_f32s(out, &bn.beta);
            put_f32s(out, &bn.running_mean);
            put_f32s(out, &bn.running_var);
        }
    }
    Ok(())
}

pub fn encode(nets: &[(&NetworkSpec, &NetworkWeights); 3]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for ((spec, w), want) in nets.iter().zip(Target::ALL) {
        if spec.target != want {
            return Err(Error::Format(format!("network `{}` in slot `{want}`", spec.target)));
        }
        encode_network(&mut out, spec, w)?;
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Format(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<usize> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]) as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }
}

fn decode_network(r: &mut Reader<'_>) -> Result<(NetworkSpec, NetworkWeights)> {
    let target = Target::from_tag(r.u8()?)?;
    let input_channels = r.u16()?;
    let n = r.u16()?;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let kind = LayerKind::from_code(r.u8()?)?;
        let in_channels = r.u16()?;
        let out_channels = r.u16()?;
        let dilation = r.u8()? as usize;
        let skips = r.u8()? as usize;
        let skip_sources = (0..skips).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
        layers.push(LayerSpec { kind, in_channels, out_channels, dilation, skip_sources });
    }
    let width = layers.first().map(|l| l.out_channels).unwrap_or(0);
    let spec = NetworkSpec { target, input_channels, width, layers };
    spec.validate().map_err(|e| Error::Format(format!("network `{target}`: {e}")))?;
    let mut wl = Vec::with_capacity(n);
    for l in &spec.layers {
        let kernel = r.f32s(l.kernel_len())?;
        let bias = r.f32s(l.out_channels)?;
        let bn = if l.has_batch_norm() {
            Some(BatchNorm {
                gamma: r.f32s(l.out_channels)?,
                beta: r.f32s(l.out_channels)?,
                running_mean: r.f32s(l.out_channels)?,
                running_var: r.f32s(l.out_channels)?,
            })
        } else {
            None
        };
        wl.push(LayerWeights { kernel, bias, bn });
    }
    let weights = NetworkWeights { layers: wl };
    weights.check(&spec).map_err(|e| Error::Format(e.to_string()))?;
    Ok((spec, weights))
}

pub fn decode(buf: &[u8]) -> Result<[(NetworkSpec, NetworkWeights); 3]> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4).map_err(|_| Error::Format("missing magic".into()))? != MAGIC {
        return Err(Error::Format("bad magic (expected CBCD)".into()));
    }
    let version = r.u16()?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let g = decode_network(&mut r)?;
    let gr = decode_network(&mut r)?;
    let gb = decode_network(&mut r)?;
    for ((spec, _), want) in [&g, &gr, &gb].into_iter().zip(Target::ALL) {
        if spec.target != want {
            return Err(Error::Format(format!("network `{}` in slot `{want}`", spec.target)));
        }
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok([g, gr, gb])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Vec<(NetworkSpec, NetworkWeights)> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        Target::ALL
            .into_iter()
            .map(|t| {
                let s = NetworkSpec::default_for(t);
                let w = NetworkWeights::he_init(&s, &mut rng);
                (s, w)
            })
            .collect()
    }

    fn enc(n: &[(NetworkSpec, NetworkWeights)]) -> Vec<u8> {
        encode(&[(&n[0].0, &n[0].1), (&n[1].0, &n[1].1), (&n[2].0, &n[2].1)]).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = enc(&sample());
        assert_eq!(&bytes[..4], b"CBCD");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(bytes[6], 0); // g tag
        assert_eq!(&bytes[7..9], &[3, 0]); // input channels
        assert_eq!(&bytes[9..11], &[32, 0]); // layer count
        // first descriptor: input, 3 -> 32, dilation 1, no skips
        assert_eq!(&bytes[11..18], &[0, 3, 0, 32, 0, 1, 0]);
    }

    #[test]
    fn write_read_write_identical() {
        let first = enc(&sample());
        let decoded = decode(&first).unwrap();
        let second = enc(&decoded);
        assert_eq!(first, second);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = enc(&sample());
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode(&extra).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(decode(&bad_magic).is_err());
        let mut bad_shape = bytes.clone();
        bad_shape[14] = 33; // input layer cout no longer matches
        assert!(decode(&bad_shape).is_err());
        assert!(decode(&[]).is_err());
    }
}
