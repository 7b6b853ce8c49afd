//! Binary model files.
//!
//! Layout (little-endian): magic, `u32` version, `u8` kind tag, `u32` axis count, `u32`
//! output channels, one header block per axis (domain, layer sizes, ω₀ values, Fourier
//! configuration), the optional normalizer, then every parameter array as raw `f64`: per axis
//! the Fourier bases followed by the layer weights and biases in declaration order, and
//! finally the core tensor.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::normalize::{AxisTransform, Normalizer};
use crate::error::{Error, Result};
use crate::features::{FourierConfig, FourierMap};
use crate::linalg::{DenseMatrix, DenseTensor};
use crate::model::factorized::{Axis, AxisDomain, FactorizedInr};
use crate::model::mlp::{Activation, FreqMlp, Linear, SineLayer};

pub const MAGIC: &[u8; 6] = b"STINR\x01";
pub const FORMAT_VERSION: u32 = 1;

/// Model family recorded in the file header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Two continuous axes with a middle matrix.
    Matrix,
    /// Any other arity with continuous axes and a core tensor.
    Tensor,
    /// At least one axis indexes graph nodes through a spectral embedding.
    Graph,
}

impl ModelKind {
    pub fn of(model: &FactorizedInr) -> Self {
        if model
            .axes()
            .iter()
            .any(|a| matches!(a.domain, AxisDomain::Graph { .. }))
        {
            ModelKind::Graph
        } else if model.arity() == 2 && model.out_channels() == 1 {
            ModelKind::Matrix
        } else {
            ModelKind::Tensor
        }
    }

    fn tag(self) -> u8 {
        match self {
            ModelKind::Matrix => 1,
            ModelKind::Tensor => 2,
            ModelKind::Graph => 3,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(ModelKind::Matrix),
            2 => Ok(ModelKind::Tensor),
            3 => Ok(ModelKind::Graph),
            t => Err(Error::Format(format!("unknown model kind tag {t}"))),
        }
    }
}

/// A model plus the normalization needed to use it on raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: ModelKind,
    pub model: FactorizedInr,
    pub normalizer: Option<Normalizer>,
}

impl ModelBundle {
    pub fn new(model: FactorizedInr, normalizer: Option<Normalizer>) -> Self {
        Self {
            kind: ModelKind::of(&model),
            model,
            normalizer,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        encode(self, &mut w);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let bundle = decode(&mut r)?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after model",
                bytes.len() - r.pos
            )));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

pub fn serialize(bundle: &ModelBundle, sink: &mut impl Write) -> Result<()> {
    sink.write_all(&bundle.to_bytes())?;
    Ok(())
}

pub fn deserialize(source: &mut impl Read) -> Result<ModelBundle> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    ModelBundle::from_bytes(&bytes)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        if end > self.buf.len() {
            return Err(Error::Truncated);
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        let b = self.take(8)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
    /// Reads `n` parameters, rejecting non-finite values.
    fn params(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        if n > (self.buf.len() - self.pos) / 8 {
            return Err(Error::Truncated);
        }
        let v = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(what.to_string()));
        }
        Ok(v)
    }
    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<DenseMatrix> {
        let n = rows.checked_mul(cols).ok_or(Error::Truncated)?;
        DenseMatrix::new(rows, cols, self.params(n, what)?)
    }
}

fn encode(bundle: &ModelBundle, w: &mut Writer) {
    let model = &bundle.model;
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION as usize);
    w.u8(bundle.kind.tag());
    w.u32(model.arity());
    w.u32(model.out_channels());

    for axis in model.axes() {
        match &axis.domain {
            AxisDomain::Continuous => w.u8(0),
            AxisDomain::Graph { embedding } => {
                w.u8(1);
                w.u32(embedding.rows());
                w.u32(embedding.cols());
                w.f64s(embedding.as_slice());
            }
        }
        let net = &axis.net;
        let cfg = net.fourier().config();
        w.u32(cfg.input_dim);
        w.u32(cfg.rows_per_map);
        w.u64(cfg.seed);
        w.u32(cfg.scales.len());
        w.f64s(&cfg.scales);
        w.u8(match net.activation() {
            Activation::Sine => 0,
            Activation::Relu => 1,
        });
        w.u32(net.hidden_width());
        w.u32(net.depth());
        for layer in net.hidden_layers() {
            w.u32(layer.weight.rows());
            w.f64(layer.omega0);
        }
        w.u32(net.out_dim());
    }

    match &bundle.normalizer {
        None => w.u8(0),
        Some(n) => {
            w.u8(1);
            w.u32(n.axes.len());
            for t in &n.axes {
                match *t {
                    AxisTransform::Affine {
                        center,
                        half_extent,
                    } => {
                        w.u8(0);
                        w.f64(center);
                        w.f64(half_extent);
                    }
                    AxisTransform::Index => w.u8(1),
                }
            }
            w.u32(n.value_mean.len());
            w.f64s(&n.value_mean);
            w.f64s(&n.value_std);
        }
    }

    for axis in model.axes() {
        for b in axis.net.fourier().bases() {
            w.f64s(b.as_slice());
        }
        for p in axis.net.parameters() {
            w.f64s(p);
        }
    }
    w.f64s(model.core().as_slice());
}

struct AxisHeader {
    domain: AxisDomain,
    fourier: FourierConfig,
    activation: Activation,
    hidden: usize,
    layers: Vec<(usize, f64)>,
    out_dim: usize,
}

fn decode(r: &mut Reader) -> Result<ModelBundle> {
    if r.take(MAGIC.len())
        .map_err(|_| Error::Format("bad magic".into()))?
        != MAGIC
    {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let kind = ModelKind::from_tag(r.u8()?)?;
    let arity = r.u32()?;
    let out_channels = r.u32()?;
    if arity == 0 || out_channels == 0 {
        return Err(Error::Format("model without axes or channels".into()));
    }

    let mut headers = Vec::with_capacity(arity.min(64));
    for _ in 0..arity {
        let domain = match r.u8()? {
            0 => AxisDomain::Continuous,
            1 => {
                let rows = r.u32()?;
                let cols = r.u32()?;
                AxisDomain::Graph {
                    embedding: r.matrix(rows, cols, "embedding")?,
                }
            }
            t => return Err(Error::Format(format!("unknown axis domain tag {t}"))),
        };
        let input_dim = r.u32()?;
        let rows_per_map = r.u32()?;
        let seed = r.u64()?;
        let n_scales = r.u32()?;
        let scales = r.params(n_scales, "Fourier scales")?;
        let fourier = FourierConfig::new(scales, rows_per_map, input_dim, seed);
        let activation = match r.u8()? {
            0 => Activation::Sine,
            1 => Activation::Relu,
            t => return Err(Error::Format(format!("unknown activation tag {t}"))),
        };
        let hidden = r.u32()?;
        let depth = r.u32()?;
        let layers = (0..depth)
            .map(|_| Ok((r.u32()?, r.f64()?)))
            .collect::<Result<Vec<_>>>()?;
        let out_dim = r.u32()?;
        headers.push(AxisHeader {
            domain,
            fourier,
            activation,
            hidden,
            layers,
            out_dim,
        });
    }

    let normalizer = match r.u8()? {
        0 => None,
        1 => {
            let n_axes = r.u32()?;
            let axes = (0..n_axes)
                .map(|_| match r.u8()? {
                    0 => {
                        let v = r.params(2, "normalizer")?;
                        Ok(AxisTransform::Affine {
                            center: v[0],
                            half_extent: v[1],
                        })
                    }
                    1 => Ok(AxisTransform::Index),
                    t => Err(Error::Format(format!("unknown axis transform tag {t}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let c = r.u32()?;
            let value_mean = r.params(c, "normalizer")?;
            let value_std = r.params(c, "normalizer")?;
            Some(Normalizer {
                axes,
                value_mean,
                value_std,
            })
        }
        t => return Err(Error::Format(format!("unknown normalizer tag {t}"))),
    };

    let mut axes = Vec::with_capacity(headers.len());
    for h in headers {
        let cfg = &h.fourier;
        let bases = (0..cfg.num_maps())
            .map(|_| r.matrix(cfg.rows_per_map, cfg.input_dim, "Fourier basis"))
            .collect::<Result<Vec<_>>>()?;
        let fourier = FourierMap::from_parts(h.fourier.clone(), bases)?;
        let enc = if cfg.num_maps() == 0 {
            cfg.input_dim
        } else {
            cfg.output_dim()
        };
        let input = Linear::new(
            r.matrix(h.hidden, enc, "weights")?,
            r.params(h.hidden, "biases")?,
        )?;
        let mut width = h.hidden;
        let mut hidden = Vec::with_capacity(h.layers.len());
        for &(rows, omega0) in &h.layers {
            let weight = r.matrix(rows, width, "weights")?;
            let bias = r.params(rows, "biases")?;
            hidden.push(SineLayer::new(weight, bias, omega0)?);
            width = rows;
        }
        let head = Linear::new(
            r.matrix(h.out_dim, width, "weights")?,
            r.params(h.out_dim, "biases")?,
        )?;
        axes.push(Axis {
            domain: h.domain,
            net: FreqMlp::from_parts(fourier, input, hidden, h.activation, head)?,
        });
    }
    let mut shape: Vec<usize> = axes.iter().map(|a| a.net.out_dim()).collect();
    if out_channels > 1 {
        shape.push(out_channels);
    }
    let len = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or(Error::Truncated)?;
    let core = DenseTensor::new(shape, r.params(len, "core")?)?;
    let model = FactorizedInr::from_parts(axes, core, out_channels)?;
    if ModelKind::of(&model) != kind {
        return Err(Error::Format(
            "kind tag does not match the stored model".into(),
        ));
    }
    Ok(ModelBundle {
        kind,
        model,
        normalizer,
    })
}
