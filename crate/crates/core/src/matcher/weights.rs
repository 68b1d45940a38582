//! Binary weights files.
//!
//! Layout (all integers `u32`, all values little-endian):
//!
//! ```text
//! magic "GZW1" | version | input_side | channels
//! for psi_e, psi_d, psi_s: n_layers | relu_last | widths[n_layers + 1]
//! for psi_e, psi_d, psi_s, for each layer: weight (out x in, row-major) | bias   as f32
//! ```
//!
//! Parameters are trained in `f64` and stored as `f32`.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::embed::EmbeddingNet;
use super::mlp::{Dense, Mlp};
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"GZW1";
pub const WEIGHTS_VERSION: u32 = 1;

pub(crate) struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub(crate) fn new(inner: W) -> Self {
        Self { inner }
    }

    fn io(e: std::io::Error) -> Error {
        Error::io("writing weights", e)
    }

    pub(crate) fn bytes(&mut self, b: &[u8]) -> Result<()> {
        self.inner.write_all(b).map_err(Self::io)
    }

    pub(crate) fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::WeightsFormat(format!("{v} exceeds u32")))?;
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn mlp_header(&mut self, mlp: &Mlp) -> Result<()> {
        self.u32(mlp.layers.len())?;
        self.u32(mlp.relu_last as usize)?;
        for w in mlp.widths() {
            self.u32(w)?;
        }
        Ok(())
    }

    pub(crate) fn mlp_params(&mut self, mlp: &Mlp) -> Result<()> {
        for p in mlp.params() {
            let mut buf = Vec::with_capacity(p.len() * 4);
            for &v in p {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            self.bytes(&buf)?;
        }
        Ok(())
    }

    pub(crate) fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(Self::io)?;
        Ok(self.inner)
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub(crate) fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::WeightsFormat("file is truncated".into()))?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<usize> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("four bytes")) as usize)
    }

    pub(crate) fn magic(&mut self, want: &[u8; 4]) -> Result<()> {
        let got = self.bytes(4)?;
        if got != want {
            return Err(Error::WeightsFormat(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(want)
            )));
        }
        Ok(())
    }

    /// Reads a header and returns a zero network of that shape.
    pub(crate) fn mlp_header(&mut self) -> Result<Mlp> {
        let layers = self.u32()?;
        if layers == 0 || layers > 64 {
            return Err(Error::WeightsFormat(format!("implausible layer count {layers}")));
        }
        let relu_last = match self.u32()? {
            0 => false,
            1 => true,
            v => return Err(Error::WeightsFormat(format!("relu flag {v}"))),
        };
        let widths = (0..=layers).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        if widths.iter().any(|&w| w == 0 || w > 1 << 24) {
            return Err(Error::WeightsFormat(format!("implausible widths {widths:?}")));
        }
        Ok(Mlp::zeros(&widths, relu_last))
    }

    pub(crate) fn mlp_params(&mut self, mlp: &mut Mlp) -> Result<()> {
        for layer in &mut mlp.layers {
            let Dense { weight, bias } = layer;
            let w = self.f32s(weight.len())?;
            *weight = Array2::from_shape_vec(weight.dim(), w).expect("length checked");
            let b = self.f32s(bias.len())?;
            *bias = Array1::from(b);
        }
        if !mlp.all_finite() {
            return Err(Error::WeightsFormat("non-finite parameters".into()));
        }
        Ok(())
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.bytes(n * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")) as f64)
            .collect())
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::WeightsFormat(format!(
                "{} trailing bytes",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut data = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    Ok(data)
}

pub(crate) fn write_file(path: &Path, data: &[u8]) -> Result<()> {
    std::fs::write(path, data).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

impl EmbeddingNet {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(Vec::new());
        w.bytes(WEIGHTS_MAGIC)?;
        w.u32(WEIGHTS_VERSION as usize)?;
        w.u32(self.input_side)?;
        w.u32(self.channels)?;
        for mlp in [&self.psi_e, &self.psi_d, &self.psi_s] {
            w.mlp_header(mlp)?;
        }
        for mlp in [&self.psi_e, &self.psi_d, &self.psi_s] {
            w.mlp_params(mlp)?;
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data);
        r.magic(WEIGHTS_MAGIC)?;
        let version = r.u32()?;
        if version != WEIGHTS_VERSION as usize {
            return Err(Error::WeightsFormat(format!("unsupported version {version}")));
        }
        let input_side = r.u32()?;
        let channels = r.u32()?;
        if channels != 1 && channels != 3 {
            return Err(Error::WeightsFormat(format!("{channels} channels")));
        }
        let mut psi_e = r.mlp_header()?;
        let mut psi_d = r.mlp_header()?;
        let mut psi_s = r.mlp_header()?;
        let input_dim = input_side * input_side * channels;
        if psi_e.input_dim() != input_dim
            || psi_d.input_dim() != input_dim
            || psi_e.output_dim() != psi_s.input_dim()
            || psi_d.output_dim() != psi_s.input_dim()
        {
            return Err(Error::WeightsFormat(format!(
                "inconsistent widths: psi_e {:?}, psi_d {:?}, psi_s {:?}, input {input_dim}",
                psi_e.widths(),
                psi_d.widths(),
                psi_s.widths()
            )));
        }
        for mlp in [&mut psi_e, &mut psi_d, &mut psi_s] {
            r.mlp_params(mlp)?;
        }
        r.finish()?;
        Ok(Self {
            input_side,
            channels,
            psi_e,
            psi_d,
            psi_s,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?)
    }
}
