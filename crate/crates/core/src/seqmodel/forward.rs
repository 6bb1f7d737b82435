use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lexicon::Serialization;
use crate::structures::Target;

use super::{CellKind, HeadKind, SeqModel, Standardizer};

const LOG_VAR_RANGE: f64 = 10.0;

/// A serialization as model input: symbol indices, standardized values (0 when the
/// symbol carries none) and the change-of-variables term `Σ ln scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub syms: Vec<usize>,
    pub vals: Vec<f64>,
    pub valued: Vec<bool>,
    pub log_jacobian: f64,
}

impl Encoded {
    pub fn new(a: &Serialization, std: &Standardizer, vocab: usize) -> Result<Self> {
        let mut e = Encoded { syms: vec![], vals: vec![], valued: vec![], log_jacobian: 0.0 };
        for el in &a.elements {
            if el.symbol.index() >= vocab {
                return Err(Error::UnknownSymbol(format!("#{}", el.symbol.0)));
            }
            e.syms.push(el.symbol.index());
            match el.value {
                Some(v) => {
                    e.vals.push(std.apply(el.symbol, v));
                    e.valued.push(true);
                    e.log_jacobian += std.log_scale(el.symbol);
                }
                None => {
                    e.vals.push(0.0);
                    e.valued.push(false);
                }
            }
        }
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.syms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.syms.is_empty()
    }
}

#[derive(Clone, Debug)]
pub(super) struct GruCache {
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
}

/// Hidden trajectory `h⁰ … hᵀ` and the generative NLL in standardized units.
#[derive(Clone, Debug)]
pub struct Trace {
    pub h: Vec<Vec<f64>>,
    pub nll: f64,
    gru: Vec<GruCache>,
}

pub(super) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(super) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(super) fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let l = log_sum_exp(xs);
    xs.iter().map(|x| x - l).collect()
}

/// `out += W[:, ..x.len()] x` for a row-major block with row stride `stride`.
fn gemv(p: &[f64], off: usize, stride: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &p[off + r * stride..off + r * stride + x.len()];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W[:, ..out.len()]ᵀ g`.
fn gemv_t(p: &[f64], off: usize, stride: usize, g: &[f64], out: &mut [f64]) {
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &p[off + r * stride..off + r * stride + out.len()];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * gr;
        }
    }
}

/// `W[:, ..x.len()] += g xᵀ`.
fn ger(grad: &mut [f64], off: usize, stride: usize, g: &[f64], x: &[f64]) {
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &mut grad[off + r * stride..off + r * stride + x.len()];
        for (w, xc) in row.iter_mut().zip(x) {
            *w += gr * xc;
        }
    }
}

/// Gaussian-mixture NLL of `v` given raw outputs `[means; log-variances; logits]`, and
/// its gradient with respect to those outputs.
pub(super) fn mixture_nll(o: &[f64], m: usize, v: f64) -> (f64, Vec<f64>) {
    let logw = log_softmax(&o[2 * m..3 * m]);
    let mut terms = vec![0.0; m];
    let mut z2 = vec![0.0; m];
    for i in 0..m {
        let s = o[m + i].clamp(-LOG_VAR_RANGE, LOG_VAR_RANGE);
        z2[i] = (v - o[i]).powi(2) * (-s).exp();
        terms[i] = logw[i] - 0.5 * (2.0 * PI).ln() - 0.5 * s - 0.5 * z2[i];
    }
    let lse = log_sum_exp(&terms);
    let mut d = vec![0.0; 3 * m];
    for i in 0..m {
        let r = (terms[i] - lse).exp();
        let s = o[m + i].clamp(-LOG_VAR_RANGE, LOG_VAR_RANGE);
        d[i] = -r * (v - o[i]) * (-s).exp();
        if o[m + i].abs() < LOG_VAR_RANGE {
            d[m + i] = r * 0.5 * (1.0 - z2[i]);
        }
        d[2 * m + i] = logw[i].exp() - r;
    }
    (-lse, d)
}

impl SeqModel {
    fn input_add(&self, off: usize, sym: usize, val: f64, out: &mut [f64]) {
        let d = self.dims.input_dim();
        let v = self.dims.vocab;
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.params[off + i * d + sym] + val * self.params[off + i * d + v];
        }
    }

    fn input_grad(&self, grad: &mut [f64], off: usize, sym: usize, val: f64, g: &[f64]) {
        let d = self.dims.input_dim();
        let v = self.dims.vocab;
        for (i, &gi) in g.iter().enumerate() {
            grad[off + i * d + sym] += gi;
            grad[off + i * d + v] += gi * val;
        }
    }

    fn step(&self, h: &[f64], sym: usize, val: f64) -> (Vec<f64>, Option<GruCache>) {
        let hd = self.dims.hidden;
        let p = &self.params;
        match self.dims.cell {
            CellKind::Vanilla => {
                let (wh, wi) = self.layout.gates[0];
                let mut pre = vec![0.0; hd];
                gemv(p, wh, hd, h, &mut pre);
                self.input_add(wi, sym, val, &mut pre);
                (pre.into_iter().map(sigmoid).collect(), None)
            }
            CellKind::Gru => {
                let gate = |k: usize, hin: &[f64]| {
                    let (wh, wi) = self.layout.gates[k];
                    let mut pre = vec![0.0; hd];
                    gemv(p, wh, hd, hin, &mut pre);
                    self.input_add(wi, sym, val, &mut pre);
                    pre
                };
                let z: Vec<f64> = gate(0, h).into_iter().map(sigmoid).collect();
                let r: Vec<f64> = gate(1, h).into_iter().map(sigmoid).collect();
                let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
                let n: Vec<f64> = gate(2, &rh).into_iter().map(f64::tanh).collect();
                let out = (0..hd).map(|i| (1.0 - z[i]) * n[i] + z[i] * h[i]).collect();
                (out, Some(GruCache { z, r, n }))
            }
        }
    }

    pub(super) fn cat_logits(&self, h: &[f64]) -> Vec<f64> {
        let mut out = self.params[self.layout.cat_b..self.layout.cat_b + self.dims.vocab].to_vec();
        gemv(&self.params, self.layout.cat_w, self.dims.hidden, h, &mut out);
        out
    }

    pub(super) fn mix_outputs(&self, h: &[f64], sym: usize) -> Vec<f64> {
        let rows = 3 * self.dims.mixture;
        let stride = self.dims.hidden + self.dims.vocab;
        let (w, b) = (self.layout.mix_w, self.layout.mix_b);
        let mut out = self.params[b..b + rows].to_vec();
        gemv(&self.params, w, stride, h, &mut out);
        for (r, o) in out.iter_mut().enumerate() {
            *o += self.params[w + r * stride + self.dims.hidden + sym];
        }
        out
    }

    pub(super) fn head_outputs(&self, h: &[f64]) -> Vec<f64> {
        let n = self.dims.head.outputs();
        let mut out = self.params[self.layout.head_b..self.layout.head_b + n].to_vec();
        gemv(&self.params, self.layout.head_w, self.dims.hidden, h, &mut out);
        out
    }

    /// Runs the recurrence and accumulates the generative NLL.
    pub fn forward(&self, e: &Encoded) -> Result<Trace> {
        let mut h = vec![vec![0.0; self.dims.hidden]];
        let mut gru = Vec::new();
        let mut nll = 0.0;
        for t in 0..e.len() {
            let prev = &h[t];
            let lp = log_softmax(&self.cat_logits(prev));
            nll -= lp[e.syms[t]];
            if e.valued[t] {
                nll += mixture_nll(&self.mix_outputs(prev, e.syms[t]), self.dims.mixture, e.vals[t]).0;
            }
            let (next, cache) = self.step(prev, e.syms[t], e.vals[t]);
            if next.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteActivation { step: t + 1 });
            }
            h.push(next);
            gru.extend(cache);
        }
        if !nll.is_finite() {
            return Err(Error::NonFiniteActivation { step: e.len() });
        }
        Ok(Trace { h, nll, gru })
    }

    /// Discriminative loss on `hᵀ` and its gradient with respect to the head outputs.
    pub(super) fn head_loss(&self, h_last: &[f64], y: Target) -> Result<(f64, Vec<f64>)> {
        let o = self.head_outputs(h_last);
        match (self.dims.head, y) {
            (HeadKind::None, _) => Err(Error::MissingHead),
            (HeadKind::Classes(c), Target::Class(k)) => {
                if k < 1 || k > c {
                    return Err(Error::InvalidInstance(format!("class {k} outside 1..={c}")));
                }
                let lp = log_softmax(&o);
                let mut g: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
                g[k as usize - 1] -= 1.0;
                Ok((-lp[k as usize - 1], g))
            }
            (HeadKind::Regression(m), Target::Value(v)) => Ok(mixture_nll(&o, m as usize, v)),
            _ => Err(Error::InvalidConfig("target kind does not match the model head".into())),
        }
    }

    /// Reverse accumulation through the whole sequence. `target` selects the
    /// discriminative objective; `extra_dh[t]`, when given, is added to ∂L/∂hᵗ (used by
    /// the regularizer). Returns the objective value in standardized units.
    pub(super) fn backward(
        &self,
        e: &Encoded,
        trace: &Trace,
        target: Option<Target>,
        extra_dh: Option<&[Vec<f64>]>,
        grad: &mut [f64],
    ) -> Result<f64> {
        let hd = self.dims.hidden;
        let v = self.dims.vocab;
        let m = self.dims.mixture;
        let lay = &self.layout;
        let t_len = e.len();
        let mut dh: Vec<Vec<f64>> = match extra_dh {
            Some(x) => x.to_vec(),
            None => vec![vec![0.0; hd]; t_len + 1],
        };
        let value = match target {
            None => {
                for t in 0..t_len {
                    let h = &trace.h[t];
                    let sym = e.syms[t];
                    let mut g: Vec<f64> = log_softmax(&self.cat_logits(h)).iter().map(|l| l.exp()).collect();
                    g[sym] -= 1.0;
                    ger(grad, lay.cat_w, hd, &g, h);
                    for (b, gi) in grad[lay.cat_b..lay.cat_b + v].iter_mut().zip(&g) {
                        *b += gi;
                    }
                    gemv_t(&self.params, lay.cat_w, hd, &g, &mut dh[t]);
                    if e.valued[t] {
                        let (_, d) = mixture_nll(&self.mix_outputs(h, sym), m, e.vals[t]);
                        let stride = hd + v;
                        ger(grad, lay.mix_w, stride, &d, h);
                        for (r, dr) in d.iter().enumerate() {
                            grad[lay.mix_w + r * stride + hd + sym] += dr;
                            grad[lay.mix_b + r] += dr;
                        }
                        gemv_t(&self.params, lay.mix_w, stride, &d, &mut dh[t]);
                    }
                }
                trace.nll
            }
            Some(y) => {
                let h = &trace.h[t_len];
                let (loss, g) = self.head_loss(h, y)?;
                ger(grad, lay.head_w, hd, &g, h);
                for (r, gr) in g.iter().enumerate() {
                    grad[lay.head_b + r] += gr;
                }
                gemv_t(&self.params, lay.head_w, hd, &g, &mut dh[t_len]);
                loss
            }
        };
        for t in (1..=t_len).rev() {
            let h_prev = &trace.h[t - 1];
            let h = &trace.h[t];
            let (sym, val) = (e.syms[t - 1], e.vals[t - 1]);
            let d_out = std::mem::take(&mut dh[t]);
            let mut d_prev = vec![0.0; hd];
            match self.dims.cell {
                CellKind::Vanilla => {
                    let (wh, wi) = lay.gates[0];
                    let dpre: Vec<f64> = (0..hd).map(|i| d_out[i] * h[i] * (1.0 - h[i])).collect();
                    ger(grad, wh, hd, &dpre, h_prev);
                    self.input_grad(grad, wi, sym, val, &dpre);
                    gemv_t(&self.params, wh, hd, &dpre, &mut d_prev);
                }
                CellKind::Gru => {
                    let c = &trace.gru[t - 1];
                    let (wz, iz) = lay.gates[0];
                    let (wr, ir) = lay.gates[1];
                    let (wn, inn) = lay.gates[2];
                    let dz: Vec<f64> = (0..hd)
                        .map(|i| d_out[i] * (h_prev[i] - c.n[i]) * c.z[i] * (1.0 - c.z[i]))
                        .collect();
                    let dn: Vec<f64> = (0..hd)
                        .map(|i| d_out[i] * (1.0 - c.z[i]) * (1.0 - c.n[i] * c.n[i]))
                        .collect();
                    for i in 0..hd {
                        d_prev[i] += d_out[i] * c.z[i];
                    }
                    let rh: Vec<f64> = (0..hd).map(|i| c.r[i] * h_prev[i]).collect();
                    ger(grad, wn, hd, &dn, &rh);
                    self.input_grad(grad, inn, sym, val, &dn);
                    let mut d_rh = vec![0.0; hd];
                    gemv_t(&self.params, wn, hd, &dn, &mut d_rh);
                    let dr: Vec<f64> = (0..hd)
                        .map(|i| d_rh[i] * h_prev[i] * c.r[i] * (1.0 - c.r[i]))
                        .collect();
                    for i in 0..hd {
                        d_prev[i] += d_rh[i] * c.r[i];
                    }
                    ger(grad, wz, hd, &dz, h_prev);
                    self.input_grad(grad, iz, sym, val, &dz);
                    gemv_t(&self.params, wz, hd, &dz, &mut d_prev);
                    ger(grad, wr, hd, &dr, h_prev);
                    self.input_grad(grad, ir, sym, val, &dr);
                    gemv_t(&self.params, wr, hd, &dr, &mut d_prev);
                }
            }
            for (a, b) in dh[t - 1].iter_mut().zip(&d_prev) {
                *a += b;
            }
        }
        Ok(value)
    }
}
