//! Invariant continuous-filter message passing over interatomic distances.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::molecule::Molecule;
use crate::nn::linalg::{linear, linear_backward};
use crate::nn::{sigmoid, ssp, Init, ParamId, ParamStore};

/// Elements the encoder can embed, in one-hot order.
pub const SPECIES: [u8; 5] = [1, 6, 7, 8, 9];

pub fn species_index(z: u8) -> Option<usize> {
    SPECIES.iter().position(|&s| s == z)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadialBasis {
    #[default]
    Gaussian,
    Bessel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub blocks: usize,
    pub hidden: usize,
    pub n_radial: usize,
    /// Ångström.
    pub cutoff: f64,
    pub basis: RadialBasis,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { blocks: 6, hidden: 128, n_radial: 50, cutoff: 10.0, basis: RadialBasis::Gaussian }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.blocks == 0 || self.hidden == 0 || self.n_radial == 0 {
            return Err(EncoderError::Config(String::from("blocks, hidden and n_radial must be positive")));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0) {
            return Err(EncoderError::Config(format!("cutoff must be positive, got {}", self.cutoff)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EncoderError {
    #[error("encoder configuration: {0}")]
    Config(String),
    #[error("radial expansion needs a positive distance, got {0}")]
    Domain(f64),
    #[error("atom {atom} has atomic number {z}, outside the H/C/N/O/F vocabulary")]
    UnsupportedElement { atom: usize, z: u8 },
}

/// Directed radius graph over a molecule.
#[derive(Clone, Debug, PartialEq)]
pub struct MolecularGraph {
    pub atomic_numbers: Vec<u8>,
    pub positions: Vec<[f64; 3]>,
    /// Both directions of every pair within the cutoff, sorted.
    pub edges: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
}

impl MolecularGraph {
    pub fn n_atoms(&self) -> usize {
        self.atomic_numbers.len()
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    libm::sqrt(dx * dx + dy * dy + dz * dz)
}

pub fn build_graph(molecule: &Molecule, cutoff: f64) -> MolecularGraph {
    let pos = &molecule.positions;
    let mut edges = Vec::new();
    let mut distances = Vec::new();
    for i in 0..pos.len() {
        for j in 0..pos.len() {
            if i == j {
                continue;
            }
            let d = distance(&pos[i], &pos[j]);
            if d > 0.0 && d <= cutoff {
                edges.push((i, j));
                distances.push(d);
            }
        }
    }
    MolecularGraph {
        atomic_numbers: molecule.atomic_numbers.clone(),
        positions: pos.clone(),
        edges,
        distances,
    }
}

/// Expands a distance into `n_radial` basis values.
pub fn radial_expand(d: f64, config: &EncoderConfig) -> Result<Vec<f64>, EncoderError> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(EncoderError::Domain(d));
    }
    let mut out = vec![0.0; config.n_radial];
    expand_into(d, config, &mut out);
    Ok(out)
}

fn expand_into(d: f64, config: &EncoderConfig, out: &mut [f64]) {
    let rc = config.cutoff;
    let b = config.n_radial;
    match config.basis {
        RadialBasis::Gaussian => {
            let delta = rc / b as f64;
            for (k, o) in out.iter_mut().enumerate() {
                let mu = (k + 1) as f64 * delta;
                let u = (d - mu) / delta;
                *o = libm::exp(-0.5 * u * u);
            }
        }
        RadialBasis::Bessel => {
            for (k, o) in out.iter_mut().enumerate() {
                let n = (k + 1) as f64;
                *o = libm::sin(n * core::f64::consts::PI * d / rc) / d;
            }
        }
    }
}

/// Smooth cosine cutoff, 1 at the origin and 0 at `rc`.
pub fn cosine_envelope(d: f64, rc: f64) -> f64 {
    if d >= rc {
        0.0
    } else {
        0.5 * (libm::cos(core::f64::consts::PI * d / rc) + 1.0)
    }
}

/// Geometry-dependent encoder inputs, computed once per molecule.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderInput {
    pub species: Vec<usize>,
    /// Unordered pairs `i < j`; messages flow both ways.
    pub pairs: Vec<(u32, u32)>,
    /// `pairs.len() × n_radial`, row-major.
    pub rbf: Vec<f64>,
    pub envelope: Vec<f64>,
}

impl EncoderInput {
    pub fn n_atoms(&self) -> usize {
        self.species.len()
    }
}

pub fn prepare(molecule: &Molecule, config: &EncoderConfig) -> Result<EncoderInput, EncoderError> {
    prepare_graph(&build_graph(molecule, config.cutoff), config)
}

pub fn prepare_graph(graph: &MolecularGraph, config: &EncoderConfig) -> Result<EncoderInput, EncoderError> {
    config.validate()?;
    let species = graph
        .atomic_numbers
        .iter()
        .enumerate()
        .map(|(atom, &z)| species_index(z).ok_or(EncoderError::UnsupportedElement { atom, z }))
        .collect::<Result<Vec<_>, _>>()?;
    let b = config.n_radial;
    let mut pairs = Vec::new();
    let mut rbf = Vec::new();
    let mut envelope = Vec::new();
    for (&(i, j), &d) in graph.edges.iter().zip(&graph.distances) {
        if i < j {
            pairs.push((i as u32, j as u32));
            let start = rbf.len();
            rbf.resize(start + b, 0.0);
            expand_into(d, config, &mut rbf[start..]);
            envelope.push(cosine_envelope(d, config.cutoff));
        }
    }
    Ok(EncoderInput { species, pairs, rbf, envelope })
}

/// Parameter handles of one interaction block.
#[derive(Clone, Debug)]
pub struct BlockParams {
    pub filter1_w: ParamId,
    pub filter1_b: ParamId,
    pub filter2_w: ParamId,
    pub filter2_b: ParamId,
    pub in_w: ParamId,
    pub out1_w: ParamId,
    pub out2_w: ParamId,
}

impl BlockParams {
    pub fn filter_params(&self) -> [ParamId; 4] {
        [self.filter1_w, self.filter1_b, self.filter2_w, self.filter2_b]
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub embedding: ParamId,
    pub blocks: Vec<BlockParams>,
    pub gate_w: ParamId,
    pub gate_b: ParamId,
}

struct BlockTrace {
    a1: Vec<f64>,
    s1: Vec<f64>,
    filt: Vec<f64>,
    x: Vec<f64>,
    agg: Vec<f64>,
    o1: Vec<f64>,
    s: Vec<f64>,
}

/// Forward activations kept for the backward pass.
pub struct EncoderTrace {
    /// Node states before each block and after the last, each `n × hidden`.
    pub states: Vec<Vec<f64>>,
    pub gate: Vec<f64>,
    pub g: Vec<f64>,
    blocks: Vec<BlockTrace>,
}

impl EncoderTrace {
    pub fn final_states(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn range(p: &ParamStore, id: ParamId) -> Range<usize> {
    p.spec(id).range()
}

/// Two disjoint gradient slices, `a` preceding `b` in the layout.
pub(crate) fn split_pair(buf: &mut [f64], a: Range<usize>, b: Range<usize>) -> (&mut [f64], &mut [f64]) {
    assert!(a.end <= b.start);
    let (lo, hi) = buf.split_at_mut(b.start);
    (&mut lo[a], &mut hi[..b.end - b.start])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Encoder {
    pub fn register(store: &mut ParamStore, config: EncoderConfig, prefix: &str) -> Result<Self, EncoderError> {
        config.validate()?;
        let f = config.hidden;
        let b = config.n_radial;
        let ns = SPECIES.len();
        let embedding = store.add(format!("{prefix}embedding"), &[ns, f], Init::Uniform { fan_in: ns });
        let blocks = (0..config.blocks)
            .map(|t| {
                let name = |s: &str| format!("{prefix}block{t}.{s}");
                BlockParams {
                    filter1_w: store.add(name("filter1.weight"), &[f, b], Init::Uniform { fan_in: b }),
                    filter1_b: store.add(name("filter1.bias"), &[f], Init::Uniform { fan_in: b }),
                    filter2_w: store.add(name("filter2.weight"), &[f, f], Init::Uniform { fan_in: f }),
                    filter2_b: store.add(name("filter2.bias"), &[f], Init::Uniform { fan_in: f }),
                    in_w: store.add(name("in.weight"), &[f, f], Init::Uniform { fan_in: f }),
                    out1_w: store.add(name("out1.weight"), &[f, f], Init::Uniform { fan_in: f }),
                    out2_w: store.add(name("out2.weight"), &[f, f], Init::Uniform { fan_in: f }),
                }
            })
            .collect();
        let gate_w = store.add(format!("{prefix}readout.gate.weight"), &[f, f], Init::Uniform { fan_in: f });
        let gate_b = store.add(format!("{prefix}readout.gate.bias"), &[f], Init::Zeros);
        Ok(Self { config, embedding, blocks, gate_w, gate_b })
    }

    /// Graph-level vector `g`.
    pub fn encode(&self, p: &ParamStore, input: &EncoderInput) -> Vec<f64> {
        self.forward(p, input).g
    }

    pub fn forward(&self, p: &ParamStore, input: &EncoderInput) -> EncoderTrace {
        let f = self.config.hidden;
        let nb = self.config.n_radial;
        let n = input.n_atoms();
        let np = input.pairs.len();
        assert_eq!(input.rbf.len(), np * nb, "radial features do not match the encoder configuration");

        let emb = p.get(self.embedding);
        let mut h = vec![0.0; n * f];
        for (row, &s) in h.chunks_exact_mut(f).zip(&input.species) {
            row.copy_from_slice(&emb[s * f..(s + 1) * f]);
        }
        let mut states = Vec::with_capacity(self.blocks.len() + 1);
        let mut traces = Vec::with_capacity(self.blocks.len());
        for bp in &self.blocks {
            let mut a1 = vec![0.0; np * f];
            linear(&input.rbf, p.get(bp.filter1_w), Some(p.get(bp.filter1_b)), np, nb, f, &mut a1);
            let s1: Vec<f64> = a1.iter().map(|&v| ssp(v)).collect();
            let mut filt = vec![0.0; np * f];
            linear(&s1, p.get(bp.filter2_w), Some(p.get(bp.filter2_b)), np, f, f, &mut filt);
            for (row, &e) in filt.chunks_exact_mut(f).zip(&input.envelope) {
                row.iter_mut().for_each(|v| *v *= e);
            }

            let mut x = vec![0.0; n * f];
            linear(&h, p.get(bp.in_w), None, n, f, f, &mut x);
            let mut agg = vec![0.0; n * f];
            for (k, &(i, j)) in input.pairs.iter().enumerate() {
                let (i, j) = (i as usize, j as usize);
                let w = &filt[k * f..(k + 1) * f];
                for c in 0..f {
                    agg[i * f + c] += w[c] * x[j * f + c];
                    agg[j * f + c] += w[c] * x[i * f + c];
                }
            }
            let mut o1 = vec![0.0; n * f];
            linear(&agg, p.get(bp.out1_w), None, n, f, f, &mut o1);
            let s: Vec<f64> = o1.iter().map(|&v| ssp(v)).collect();
            let mut v = vec![0.0; n * f];
            linear(&s, p.get(bp.out2_w), None, n, f, f, &mut v);

            let mut next = h.clone();
            add_into(&mut next, &v);
            states.push(core::mem::replace(&mut h, next));
            traces.push(BlockTrace { a1, s1, filt, x, agg, o1, s });
        }

        let mut a = vec![0.0; n * f];
        linear(&h, p.get(self.gate_w), Some(p.get(self.gate_b)), n, f, f, &mut a);
        let gate: Vec<f64> = a.iter().map(|&v| sigmoid(v)).collect();
        let mut g = vec![0.0; f];
        for (hr, zr) in h.chunks_exact(f).zip(gate.chunks_exact(f)) {
            for c in 0..f {
                g[c] += zr[c] * hr[c];
            }
        }
        states.push(h);
        EncoderTrace { states, gate, g, blocks: traces }
    }

    /// Accumulates parameter gradients given `∂L/∂g`.
    pub fn backward(&self, p: &ParamStore, input: &EncoderInput, trace: &EncoderTrace, dg: &[f64], grads: &mut [f64]) {
        let f = self.config.hidden;
        let nb = self.config.n_radial;
        let n = input.n_atoms();
        let np = input.pairs.len();
        let h_last = trace.final_states();

        let mut dh = vec![0.0; n * f];
        let mut da = vec![0.0; n * f];
        for i in 0..n {
            for c in 0..f {
                let k = i * f + c;
                let z = trace.gate[k];
                dh[k] = dg[c] * z;
                da[k] = dg[c] * h_last[k] * z * (1.0 - z);
            }
        }
        let mut dh_gate = vec![0.0; n * f];
        {
            let (gw, gb) = split_pair(grads, range(p, self.gate_w), range(p, self.gate_b));
            linear_backward(h_last, p.get(self.gate_w), &da, n, f, f, Some(&mut dh_gate), gw, Some(gb));
        }
        add_into(&mut dh, &dh_gate);

        let mut tmp = vec![0.0; n * f];
        for (t, bp) in self.blocks.iter().enumerate().rev() {
            let bt = &trace.blocks[t];
            let h_in = &trace.states[t];

            let mut ds = vec![0.0; n * f];
            linear_backward(&bt.s, p.get(bp.out2_w), &dh, n, f, f, Some(&mut ds), &mut grads[range(p, bp.out2_w)], None);
            for (d, &o) in ds.iter_mut().zip(&bt.o1) {
                *d *= sigmoid(o);
            }
            let mut dagg = vec![0.0; n * f];
            linear_backward(&bt.agg, p.get(bp.out1_w), &ds, n, f, f, Some(&mut dagg), &mut grads[range(p, bp.out1_w)], None);

            let mut dx = vec![0.0; n * f];
            let mut dfilt = vec![0.0; np * f];
            for (k, &(i, j)) in input.pairs.iter().enumerate() {
                let (i, j) = (i as usize, j as usize);
                let env = input.envelope[k];
                for c in 0..f {
                    let w = bt.filt[k * f + c];
                    dfilt[k * f + c] = (dagg[i * f + c] * bt.x[j * f + c] + dagg[j * f + c] * bt.x[i * f + c]) * env;
                    dx[j * f + c] += dagg[i * f + c] * w;
                    dx[i * f + c] += dagg[j * f + c] * w;
                }
            }
            linear_backward(h_in, p.get(bp.in_w), &dx, n, f, f, Some(&mut tmp), &mut grads[range(p, bp.in_w)], None);
            add_into(&mut dh, &tmp);

            let mut ds1 = vec![0.0; np * f];
            {
                let (w2, b2) = split_pair(grads, range(p, bp.filter2_w), range(p, bp.filter2_b));
                linear_backward(&bt.s1, p.get(bp.filter2_w), &dfilt, np, f, f, Some(&mut ds1), w2, Some(b2));
            }
            for (d, &a) in ds1.iter_mut().zip(&bt.a1) {
                *d *= sigmoid(a);
            }
            let (w1, b1) = split_pair(grads, range(p, bp.filter1_w), range(p, bp.filter1_b));
            linear_backward(&input.rbf, p.get(bp.filter1_w), &ds1, np, nb, f, None, w1, Some(b1));
        }

        let ge = &mut grads[range(p, self.embedding)];
        for (row, &s) in dh.chunks_exact(f).zip(&input.species) {
            add_into(&mut ge[s * f..(s + 1) * f], row);
        }
    }
}
