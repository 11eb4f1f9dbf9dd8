//! Network parameters, initialization and the "KETM" model file.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;

use super::nn::{Dense, Mlp, Scalar};
use super::{FEATURE_DIM, HIDDEN_DIM, KEYPOINT_DIM, LATENT_DIM, POINT_DIM};
use crate::error::{Error, Result};
use crate::rng;

pub const MAGIC: &[u8; 4] = b"KETM";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Proposal,
    Evaluation,
}

impl HeadKind {
    fn code(self) -> u8 {
        match self {
            HeadKind::Proposal => 1,
            HeadKind::Evaluation => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            1 => Ok(HeadKind::Proposal),
            2 => Ok(HeadKind::Evaluation),
            _ => Err(Error::Format(format!("unknown head kind {c}"))),
        }
    }

    /// Expected (inputs, outputs) of every stored layer, in file order.
    fn shape(self) -> Vec<(usize, usize)> {
        let enc = [(POINT_DIM, HIDDEN_DIM), (HIDDEN_DIM, FEATURE_DIM)];
        let mut s = enc.to_vec();
        match self {
            HeadKind::Evaluation => {
                s.extend([(FEATURE_DIM + KEYPOINT_DIM, 128), (128, 64), (64, 1)]);
            }
            HeadKind::Proposal => {
                s.extend([(FEATURE_DIM + KEYPOINT_DIM, 64), (64, 2 * LATENT_DIM)]);
                s.extend([(FEATURE_DIM + LATENT_DIM, 128), (128, 64), (64, KEYPOINT_DIM)]);
            }
        }
        s
    }
}

/// Input normalization shared by training and inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    /// Length mapped to one normalized unit.
    pub scale: f32,
    /// Points fed to the encoder per cloud.
    pub input_points: usize,
    /// Rotate clouds into their principal-axis frame.
    pub canonical: bool,
}

impl Normalization {
    fn to_floats(self) -> [f32; 3] {
        [self.scale, self.input_points as f32, if self.canonical { 1.0 } else { 0.0 }]
    }

    fn from_floats(v: [f32; 3]) -> Result<Self> {
        let n = Self { scale: v[0], input_points: v[1] as usize, canonical: v[2] != 0.0 };
        if !(n.scale.is_finite() && n.scale > 0.0) || n.input_points == 0 || v[1].fract() != 0.0 {
            return Err(Error::BadParams);
        }
        Ok(n)
    }
}

/// A head with its own encoder. The proposal head carries a recognition
/// branch (used only in training) and a decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Net<T> {
    pub kind: HeadKind,
    pub encoder: Mlp<T>,
    /// `[scorer]` for evaluation, `[recognition, decoder]` for proposal.
    pub heads: Vec<Mlp<T>>,
    pub norm: Normalization,
}

/// Stored parameters (32-bit).
pub type NetParams = Net<f32>;

fn glorot<T: Scalar>(r: &mut rng::Rng, inputs: usize, outputs: usize, gain: f64) -> Dense<T> {
    let lim = gain * (6.0 / (inputs + outputs) as f64).sqrt();
    let mut d = Dense::zeros(inputs, outputs);
    for w in &mut d.w {
        *w = T::of(r.gen_range(-lim..lim));
    }
    d
}

impl<T: Scalar> Net<T> {
    /// Fresh parameters. The scorer's last layer starts at zero so the
    /// initial score is exactly 0.5.
    pub fn init(kind: HeadKind, norm: Normalization, seed: u64) -> Self {
        let mut r = rng::rng(seed);
        let shape = kind.shape();
        let mut layers: Vec<Dense<T>> = shape.iter().map(|&(i, o)| glorot(&mut r, i, o, 1.0)).collect();
        let last = layers.len() - 1;
        match kind {
            HeadKind::Evaluation => layers[last] = Dense::zeros(64, 1),
            HeadKind::Proposal => {
                for w in &mut layers[last].w {
                    *w = *w * T::of(0.1);
                }
                for w in &mut layers[3].w {
                    *w = *w * T::of(0.1);
                }
            }
        }
        Self::from_layers(kind, layers, norm)
    }

    fn from_layers(kind: HeadKind, mut layers: Vec<Dense<T>>, norm: Normalization) -> Self {
        let rest = layers.split_off(2);
        let encoder = Mlp { layers, act_last: true };
        let heads = match kind {
            HeadKind::Evaluation => vec![Mlp { layers: rest, act_last: false }],
            HeadKind::Proposal => {
                let mut rest = rest;
                let dec = rest.split_off(2);
                vec![Mlp { layers: rest, act_last: false }, Mlp { layers: dec, act_last: false }]
            }
        };
        Self { kind, encoder, heads, norm }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.encoder.layers.iter().chain(self.heads.iter().flat_map(|h| h.layers.iter()))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense<T>> {
        self.encoder.layers.iter_mut().chain(self.heads.iter_mut().flat_map(|h| h.layers.iter_mut()))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            kind: self.kind,
            encoder: self.encoder.zeros_like(),
            heads: self.heads.iter().map(Mlp::zeros_like).collect(),
            norm: self.norm,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Net<U> {
        Net {
            kind: self.kind,
            encoder: self.encoder.cast(),
            heads: self.heads.iter().map(Mlp::cast).collect(),
            norm: self.norm,
        }
    }

    /// Dimension and finiteness check.
    pub fn check(&self) -> Result<()> {
        let shape: Vec<(usize, usize)> = self.layers().map(|l| (l.inputs, l.outputs)).collect();
        let ok = shape == self.kind.shape()
            && self.layers().all(|l| {
                l.w.len() == l.inputs * l.outputs
                    && l.b.len() == l.outputs
                    && l.w.iter().chain(&l.b).all(|v| v.is_finite())
            });
        if ok {
            Ok(())
        } else {
            Err(Error::BadParams)
        }
    }

    pub fn expect(&self, kind: HeadKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::BadParams);
        }
        self.check()
    }
}

impl Net<f32> {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        self.check()?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.kind.code()])?;
        let layers: Vec<&Dense<f32>> = self.layers().collect();
        w.write_all(&(layers.len() as u16).to_le_bytes())?;
        for l in &layers {
            w.write_all(&(l.inputs as u32).to_le_bytes())?;
            w.write_all(&(l.outputs as u32).to_le_bytes())?;
        }
        for l in &layers {
            for v in l.w.iter().chain(&l.b) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in self.norm.to_floats() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a KETM model file".into()));
        }
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        if u16::from_le_bytes(b2) != VERSION {
            return Err(Error::Format("unsupported KETM version".into()));
        }
        let mut b1 = [0u8; 1];
        r.read_exact(&mut b1)?;
        let kind = HeadKind::from_code(b1[0])?;
        r.read_exact(&mut b2)?;
        let count = u16::from_le_bytes(b2) as usize;
        let mut b4 = [0u8; 4];
        let mut dims = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b4)?;
            let i = u32::from_le_bytes(b4) as usize;
            r.read_exact(&mut b4)?;
            let o = u32::from_le_bytes(b4) as usize;
            dims.push((i, o));
        }
        if dims != kind.shape() {
            return Err(Error::BadParams);
        }
        let mut f = || -> Result<f32> {
            r.read_exact(&mut b4)?;
            Ok(f32::from_le_bytes(b4))
        };
        let mut layers = Vec::with_capacity(count);
        for &(i, o) in &dims {
            let mut d = Dense::zeros(i, o);
            for v in d.w.iter_mut().chain(d.b.iter_mut()) {
                *v = f()?;
            }
            layers.push(d);
        }
        let norm = Normalization::from_floats([f()?, f()?, f()?])?;
        let net = Self::from_layers(kind, layers, norm);
        net.check()?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.display().to_string()),
            _ => e.into(),
        })?;
        Self::read(BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm() -> Normalization {
        Normalization { scale: 0.12, input_points: 64, canonical: true }
    }

    #[test]
    fn model_file_round_trips_bytes() {
        for kind in [HeadKind::Proposal, HeadKind::Evaluation] {
            let net = NetParams::init(kind, norm(), 3);
            let mut a = Vec::new();
            net.write(&mut a).unwrap();
            let back = NetParams::read(&a[..]).unwrap();
            assert_eq!(back, net);
            let mut b = Vec::new();
            back.write(&mut b).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let net = NetParams::init(HeadKind::Evaluation, norm(), 3);
        let mut a = Vec::new();
        net.write(&mut a).unwrap();
        let mut bad = a.clone();
        bad[9] = 7; // first layer input dimension
        assert!(matches!(NetParams::read(&bad[..]), Err(Error::BadParams)));
        assert!(NetParams::read(&a[..a.len() - 2]).is_err());
        bad = a.clone();
        bad[0] = b'X';
        assert!(matches!(NetParams::read(&bad[..]), Err(Error::Format(_))));
    }

    #[test]
    fn mismatched_head_is_bad_params() {
        let net = NetParams::init(HeadKind::Evaluation, norm(), 1);
        assert!(matches!(net.expect(HeadKind::Proposal), Err(Error::BadParams)));
        let mut broken = net.clone();
        broken.heads[0].layers[0].w.pop();
        assert!(matches!(broken.check(), Err(Error::BadParams)));
    }
}
