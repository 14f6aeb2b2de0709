//! Projection, layer normalization and gated fusion of the geometric and
//! physics-text branches, followed by the regression head.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedding::EMBED_DIM;
use crate::encoder::split_pair;
use crate::nn::linalg::{linear, linear_backward};
use crate::nn::{normalize, normalize_backward, sigmoid, ssp, Init, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    #[default]
    Mlp,
    Linear,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub latent: usize,
    pub text_dim: usize,
    pub head: HeadKind,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { latent: 32, text_dim: EMBED_DIM, head: HeadKind::Mlp }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum FusionError {
    #[error("{what} has {got} entries, expected {expected}")]
    Dimension { what: &'static str, got: usize, expected: usize },
    #[error("fused variant needs a physics embedding")]
    MissingText,
    #[error("fusion configuration: latent and text dimensions must be positive")]
    Config,
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), FusionError> {
    if got == expected {
        Ok(())
    } else {
        Err(FusionError::Dimension { what, got, expected })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    ShiftedSoftplus,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ShiftedSoftplus => ssp(x),
            Activation::Identity => x,
        }
    }
}

/// Two affine layers with `act` between: `w2·act(w1·t + b1) + b2`.
pub fn project_text(
    t: &[f64],
    w1: &[f64],
    b1: &[f64],
    w2: &[f64],
    b2: &[f64],
    act: Activation,
) -> Result<Vec<f64>, FusionError> {
    let d = b1.len();
    check_len("projection bias", b2.len(), d)?;
    if d == 0 {
        return Err(FusionError::Config);
    }
    check_len("first projection weight", w1.len(), d * t.len())?;
    check_len("second projection weight", w2.len(), d * d)?;
    let mut hidden = vec![0.0; d];
    linear(t, w1, Some(b1), 1, t.len(), d, &mut hidden);
    hidden.iter_mut().for_each(|v| *v = act.apply(*v));
    let mut out = vec![0.0; d];
    linear(&hidden, w2, Some(b2), 1, d, d, &mut out);
    Ok(out)
}

/// `gamma ⊙ (x − mean)/sqrt(var + eps) + beta`.
pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut xhat = vec![0.0; x.len()];
    normalize(x, &mut xhat);
    xhat.iter().zip(gamma).zip(beta).map(|((v, g), b)| g * v + b).collect()
}

/// Gate `z = σ(W[g‖t] + b)` and the fused `z⊙g + (1−z)⊙t`.
pub fn gate_fuse(g: &[f64], t: &[f64], w: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = g.len();
    let mut cat = Vec::with_capacity(2 * d);
    cat.extend_from_slice(g);
    cat.extend_from_slice(t);
    let mut a = vec![0.0; d];
    linear(&cat, w, Some(b), 1, 2 * d, d, &mut a);
    let z: Vec<f64> = a.iter().map(|&v| sigmoid(v)).collect();
    let f = (0..d).map(|c| z[c] * g[c] + (1.0 - z[c]) * t[c]).collect();
    (z, f)
}

#[derive(Clone, Debug)]
pub struct TextParams {
    pub proj1_w: ParamId,
    pub proj1_b: ParamId,
    pub proj2_w: ParamId,
    pub proj2_b: ParamId,
    pub w_t: ParamId,
    pub ln_gamma: ParamId,
    pub ln_beta: ParamId,
    pub gate_w: ParamId,
    pub gate_b: ParamId,
}

#[derive(Clone, Debug)]
pub struct HeadParams {
    pub hidden: Option<(ParamId, ParamId)>,
    pub out_w: ParamId,
    pub out_b: ParamId,
}

/// Fusion and head parameters; `text` is absent for the geometry-only model.
#[derive(Clone, Debug)]
pub struct FusionHead {
    pub config: FusionConfig,
    pub input_dim: usize,
    pub w_g: ParamId,
    pub ln_gamma: ParamId,
    pub ln_beta: ParamId,
    pub text: Option<TextParams>,
    pub head: HeadParams,
}

struct TextTrace {
    input: Vec<f64>,
    a1: Vec<f64>,
    s1: Vec<f64>,
    tp: Vec<f64>,
    that: Vec<f64>,
    inv_std: f64,
    tt: Vec<f64>,
    cat: Vec<f64>,
    z: Vec<f64>,
}

pub struct FusionTrace {
    g: Vec<f64>,
    ghat: Vec<f64>,
    g_inv_std: f64,
    pub g_tilde: Vec<f64>,
    text: Option<TextTrace>,
    pub fused: Vec<f64>,
    head_a: Vec<f64>,
    head_s: Vec<f64>,
    pub y: f64,
}

impl FusionTrace {
    pub fn t_tilde(&self) -> Option<&[f64]> {
        self.text.as_ref().map(|t| t.tt.as_slice())
    }

    pub fn gate(&self) -> Option<&[f64]> {
        self.text.as_ref().map(|t| t.z.as_slice())
    }
}

impl FusionHead {
    pub fn register(
        store: &mut ParamStore,
        config: FusionConfig,
        input_dim: usize,
        with_text: bool,
        prefix: &str,
    ) -> Result<Self, FusionError> {
        let d = config.latent;
        if d == 0 || config.text_dim == 0 || input_dim == 0 {
            return Err(FusionError::Config);
        }
        let w_g = store.add(format!("{prefix}geometry.weight"), &[d, input_dim], Init::Uniform { fan_in: input_dim });
        let ln_gamma = store.add(format!("{prefix}geometry.norm.gamma"), &[d], Init::Ones);
        let ln_beta = store.add(format!("{prefix}geometry.norm.beta"), &[d], Init::Zeros);
        let text = with_text.then(|| {
            let td = config.text_dim;
            TextParams {
                proj1_w: store.add(format!("{prefix}text.proj1.weight"), &[d, td], Init::Uniform { fan_in: td }),
                proj1_b: store.add(format!("{prefix}text.proj1.bias"), &[d], Init::Uniform { fan_in: td }),
                proj2_w: store.add(format!("{prefix}text.proj2.weight"), &[d, d], Init::Uniform { fan_in: d }),
                proj2_b: store.add(format!("{prefix}text.proj2.bias"), &[d], Init::Uniform { fan_in: d }),
                w_t: store.add(format!("{prefix}text.weight"), &[d, d], Init::Uniform { fan_in: d }),
                ln_gamma: store.add(format!("{prefix}text.norm.gamma"), &[d], Init::Ones),
                ln_beta: store.add(format!("{prefix}text.norm.beta"), &[d], Init::Zeros),
                gate_w: store.add(format!("{prefix}gate.weight"), &[d, 2 * d], Init::Uniform { fan_in: 2 * d }),
                gate_b: store.add(format!("{prefix}gate.bias"), &[d], Init::Zeros),
            }
        });
        let hidden = match config.head {
            HeadKind::Mlp => Some((
                store.add(format!("{prefix}head.hidden.weight"), &[d, d], Init::Uniform { fan_in: d }),
                store.add(format!("{prefix}head.hidden.bias"), &[d], Init::Uniform { fan_in: d }),
            )),
            HeadKind::Linear => None,
        };
        let head = HeadParams {
            hidden,
            out_w: store.add(format!("{prefix}head.out.weight"), &[1, d], Init::Uniform { fan_in: d }),
            out_b: store.add(format!("{prefix}head.out.bias"), &[1], Init::Uniform { fan_in: d }),
        };
        Ok(Self { config, input_dim, w_g, ln_gamma, ln_beta, text, head })
    }

    pub fn forward(&self, p: &ParamStore, g: &[f64], t_phys: Option<&[f64]>) -> Result<FusionTrace, FusionError> {
        let d = self.config.latent;
        check_len("geometric vector", g.len(), self.input_dim)?;
        let mut gp = vec![0.0; d];
        linear(g, p.get(self.w_g), None, 1, self.input_dim, d, &mut gp);
        let mut ghat = vec![0.0; d];
        let g_inv_std = normalize(&gp, &mut ghat);
        let g_tilde = affine(&ghat, p.get(self.ln_gamma), p.get(self.ln_beta));

        let (text, fused) = match &self.text {
            None => (None, g_tilde.clone()),
            Some(tp_ids) => {
                let t = t_phys.ok_or(FusionError::MissingText)?;
                check_len("physics embedding", t.len(), self.config.text_dim)?;
                let mut a1 = vec![0.0; d];
                linear(t, p.get(tp_ids.proj1_w), Some(p.get(tp_ids.proj1_b)), 1, t.len(), d, &mut a1);
                let s1: Vec<f64> = a1.iter().map(|&v| ssp(v)).collect();
                let mut tp = vec![0.0; d];
                linear(&s1, p.get(tp_ids.proj2_w), Some(p.get(tp_ids.proj2_b)), 1, d, d, &mut tp);
                let mut tq = vec![0.0; d];
                linear(&tp, p.get(tp_ids.w_t), None, 1, d, d, &mut tq);
                let mut that = vec![0.0; d];
                let inv_std = normalize(&tq, &mut that);
                let tt = affine(&that, p.get(tp_ids.ln_gamma), p.get(tp_ids.ln_beta));
                let mut cat = g_tilde.clone();
                cat.extend_from_slice(&tt);
                let (z, fused) = gate_fuse(&g_tilde, &tt, p.get(tp_ids.gate_w), p.get(tp_ids.gate_b));
                let trace = TextTrace { input: t.to_vec(), a1, s1, tp, that, inv_std, tt, cat, z };
                (Some(trace), fused)
            }
        };

        let (head_a, head_s, y) = match self.head.hidden {
            Some((hw, hb)) => {
                let mut a = vec![0.0; d];
                linear(&fused, p.get(hw), Some(p.get(hb)), 1, d, d, &mut a);
                let s: Vec<f64> = a.iter().map(|&v| ssp(v)).collect();
                let y = dot(&s, p.get(self.head.out_w)) + p.get(self.head.out_b)[0];
                (a, s, y)
            }
            None => (Vec::new(), Vec::new(), dot(&fused, p.get(self.head.out_w)) + p.get(self.head.out_b)[0]),
        };
        Ok(FusionTrace { g: g.to_vec(), ghat, g_inv_std, g_tilde, text, fused, head_a, head_s, y })
    }

    /// Accumulates parameter gradients for `∂L/∂y = dy`; returns `∂L/∂g`.
    pub fn backward(&self, p: &ParamStore, trace: &FusionTrace, dy: f64, grads: &mut [f64]) -> Vec<f64> {
        let d = self.config.latent;
        let r = |id: ParamId| p.spec(id).range();

        let mut dfused = vec![0.0; d];
        {
            let (ow, ob) = split_pair(grads, r(self.head.out_w), r(self.head.out_b));
            ob[0] += dy;
            match self.head.hidden {
                Some((hw, hb)) => {
                    let out_w = p.get(self.head.out_w);
                    for c in 0..d {
                        ow[c] += dy * trace.head_s[c];
                    }
                    let da: Vec<f64> = (0..d).map(|c| dy * out_w[c] * sigmoid(trace.head_a[c])).collect();
                    let (gw, gb) = split_pair(grads, r(hw), r(hb));
                    linear_backward(&trace.fused, p.get(hw), &da, 1, d, d, Some(&mut dfused), gw, Some(gb));
                }
                None => {
                    for c in 0..d {
                        ow[c] += dy * trace.fused[c];
                    }
                    let out_w = p.get(self.head.out_w);
                    for c in 0..d {
                        dfused[c] = dy * out_w[c];
                    }
                }
            }
        }

        let mut dg_tilde = vec![0.0; d];
        if let (Some(ids), Some(tt)) = (&self.text, &trace.text) {
            let mut dtt = vec![0.0; d];
            let mut dgate = vec![0.0; d];
            for c in 0..d {
                let z = tt.z[c];
                dg_tilde[c] = dfused[c] * z;
                dtt[c] = dfused[c] * (1.0 - z);
                dgate[c] = dfused[c] * (trace.g_tilde[c] - tt.tt[c]) * z * (1.0 - z);
            }
            let mut dcat = vec![0.0; 2 * d];
            {
                let (gw, gb) = split_pair(grads, r(ids.gate_w), r(ids.gate_b));
                linear_backward(&tt.cat, p.get(ids.gate_w), &dgate, 1, 2 * d, d, Some(&mut dcat), gw, Some(gb));
            }
            for c in 0..d {
                dg_tilde[c] += dcat[c];
                dtt[c] += dcat[d + c];
            }

            let dtq = affine_backward(&tt.that, tt.inv_std, &dtt, p.get(ids.ln_gamma), grads, r(ids.ln_gamma), r(ids.ln_beta));
            let mut dtp = vec![0.0; d];
            linear_backward(&tt.tp, p.get(ids.w_t), &dtq, 1, d, d, Some(&mut dtp), &mut grads[r(ids.w_t)], None);
            let mut ds1 = vec![0.0; d];
            {
                let (w2, b2) = split_pair(grads, r(ids.proj2_w), r(ids.proj2_b));
                linear_backward(&tt.s1, p.get(ids.proj2_w), &dtp, 1, d, d, Some(&mut ds1), w2, Some(b2));
            }
            for (v, &a) in ds1.iter_mut().zip(&tt.a1) {
                *v *= sigmoid(a);
            }
            let (w1, b1) = split_pair(grads, r(ids.proj1_w), r(ids.proj1_b));
            linear_backward(&tt.input, p.get(ids.proj1_w), &ds1, 1, tt.input.len(), d, None, w1, Some(b1));
        } else {
            dg_tilde.copy_from_slice(&dfused);
        }

        let dgp = affine_backward(&trace.ghat, trace.g_inv_std, &dg_tilde, p.get(self.ln_gamma), grads, r(self.ln_gamma), r(self.ln_beta));
        let mut dg = vec![0.0; self.input_dim];
        linear_backward(&trace.g, p.get(self.w_g), &dgp, 1, self.input_dim, d, Some(&mut dg), &mut grads[r(self.w_g)], None);
        dg
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn affine(xhat: &[f64], gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    xhat.iter().zip(gamma).zip(beta).map(|((v, g), b)| g * v + b).collect()
}

/// Backward through `gamma ⊙ xhat + beta` and the normalization.
fn affine_backward(
    xhat: &[f64],
    inv_std: f64,
    dout: &[f64],
    gamma: &[f64],
    grads: &mut [f64],
    gamma_range: core::ops::Range<usize>,
    beta_range: core::ops::Range<usize>,
) -> Vec<f64> {
    let (dgamma, dbeta) = split_pair(grads, gamma_range, beta_range);
    let mut dxhat = vec![0.0; xhat.len()];
    for c in 0..xhat.len() {
        dgamma[c] += dout[c] * xhat[c];
        dbeta[c] += dout[c];
        dxhat[c] = dout[c] * gamma[c];
    }
    let mut dx = vec![0.0; xhat.len()];
    normalize_backward(xhat, inv_std, &dxhat, &mut dx);
    dx
}
