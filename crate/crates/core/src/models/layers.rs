//! Building blocks shared by the UltraSTF and SparseTSF forwards.
//!
//! Each layer has a tape form (used by the training and inference paths)
//! and a plain-tensor convenience form that records onto a throwaway tape.

use crate::error::{Error, Result};
use crate::models::config::AttentionKind;
use crate::models::params::{ParamSet, ParamVars};
use crate::numerics::{Tape, Tensor, Var};

/// Sigma values below this are replaced by exactly 1.0.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Per-channel statistics removed by instance normalisation.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl NormStats {
    /// Mean and sample standard deviation of every row of `x[n, t]`.
    pub fn of(x: &Tensor) -> Result<Self> {
        let t = match x.shape() {
            [_, t] => *t,
            s => return Err(Error::shape("instance_normalize", format!("expected [n, t], got {s:?}"))),
        };
        if t < 2 {
            return Err(Error::Config(format!(
                "instance normalisation needs at least 2 steps, got {t}"
            )));
        }
        let mu = x.mean_axis(1)?.into_data();
        let sigma = x
            .std_axis(1)?
            .into_data()
            .into_iter()
            .map(|s| if s < SIGMA_FLOOR { 1.0 } else { s })
            .collect();
        Ok(NormStats { mu, sigma })
    }
}

/// `(x - mu) / sigma` per row, with statistics taken from a detached copy.
pub fn normalize_on_tape(tape: &mut Tape, x: Var) -> Result<(Var, NormStats)> {
    let stats = NormStats::of(tape.value(x))?;
    let scale = stats.sigma.iter().map(|s| 1.0 / s).collect();
    let shift = stats.mu.iter().zip(&stats.sigma).map(|(m, s)| -m / s).collect();
    let y = tape.row_affine(x, scale, shift)?;
    Ok((y, stats))
}

pub fn denormalize_on_tape(tape: &mut Tape, y: Var, stats: &NormStats) -> Result<Var> {
    tape.row_affine(y, stats.sigma.clone(), stats.mu.clone())
}

pub fn instance_normalize(x: &Tensor) -> Result<(Tensor, NormStats)> {
    let stats = NormStats::of(x)?;
    let cols = x.shape()[1];
    let mut data = x.data().to_vec();
    for (r, row) in data.chunks_mut(cols).enumerate() {
        row.iter_mut()
            .for_each(|v| *v = (*v - stats.mu[r]) / stats.sigma[r]);
    }
    Ok((Tensor::new(x.shape().to_vec(), data)?, stats))
}

pub fn denormalize(y: &Tensor, stats: &NormStats) -> Result<Tensor> {
    let cols = *y.shape().last().unwrap_or(&1);
    if y.len() != cols * stats.mu.len() {
        return Err(Error::shape(
            "denormalize",
            format!("{:?} with {} channels", y.shape(), stats.mu.len()),
        ));
    }
    let mut data = y.data().to_vec();
    for (r, row) in data.chunks_mut(cols).enumerate() {
        row.iter_mut()
            .for_each(|v| *v = *v * stats.sigma[r] + stats.mu[r]);
    }
    Tensor::new(y.shape().to_vec(), data)
}

/// Residual period-wide convolution: `conv1d_same(x, kernel) + x`.
pub fn aggregate_on_tape(tape: &mut Tape, x: Var, kernel: Var) -> Result<Var> {
    let h = tape.conv1d_same(x, kernel)?;
    tape.add(h, x)
}

pub fn aggregate(x: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    x.conv1d_same(kernel)?.add(x)
}

/// Query/key/value projections of one attention head.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadProjection<T> {
    pub query: T,
    pub key: T,
    pub value: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BankProjection<T> {
    /// Bias-free `w x w` query map, shared by all segments.
    Single { query: T },
    /// Per-head projections to width `floor(w / heads)` and an output map
    /// back to `w`.
    MultiHead {
        heads: Vec<HeadProjection<T>>,
        output: T,
    },
}

/// Learned key/value shapes of one core block.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeBank<T> {
    /// `[d, w]`
    pub key: T,
    /// `[d, w]`; each row is one learned shape.
    pub value: T,
    pub projection: BankProjection<T>,
}

pub type ShapeBankParams = ShapeBank<Tensor>;

impl ShapeBank<Var> {
    pub fn from_vars(vars: &ParamVars, prefix: &str, heads: usize) -> Result<Self> {
        let projection = if heads == 1 {
            BankProjection::Single {
                query: vars.get(&format!("{prefix}.query"))?,
            }
        } else {
            BankProjection::MultiHead {
                heads: (0..heads)
                    .map(|h| {
                        Ok(HeadProjection {
                            query: vars.get(&format!("{prefix}.head{h}.query"))?,
                            key: vars.get(&format!("{prefix}.head{h}.key"))?,
                            value: vars.get(&format!("{prefix}.head{h}.value"))?,
                        })
                    })
                    .collect::<Result<_>>()?,
                output: vars.get(&format!("{prefix}.output"))?,
            }
        };
        Ok(ShapeBank {
            key: vars.get(&format!("{prefix}.key"))?,
            value: vars.get(&format!("{prefix}.value"))?,
            projection,
        })
    }
}

impl ShapeBank<Tensor> {
    pub fn from_params(params: &ParamSet, prefix: &str, heads: usize) -> Result<Self> {
        let projection = if heads == 1 {
            BankProjection::Single {
                query: params.get(&format!("{prefix}.query"))?.clone(),
            }
        } else {
            BankProjection::MultiHead {
                heads: (0..heads)
                    .map(|h| {
                        Ok(HeadProjection {
                            query: params.get(&format!("{prefix}.head{h}.query"))?.clone(),
                            key: params.get(&format!("{prefix}.head{h}.key"))?.clone(),
                            value: params.get(&format!("{prefix}.head{h}.value"))?.clone(),
                        })
                    })
                    .collect::<Result<_>>()?,
                output: params.get(&format!("{prefix}.output"))?.clone(),
            }
        };
        Ok(ShapeBank {
            key: params.get(&format!("{prefix}.key"))?.clone(),
            value: params.get(&format!("{prefix}.value"))?.clone(),
            projection,
        })
    }

    fn record(&self, tape: &mut Tape) -> ShapeBank<Var> {
        let projection = match &self.projection {
            BankProjection::Single { query } => BankProjection::Single {
                query: tape.constant(query.clone()),
            },
            BankProjection::MultiHead { heads, output } => BankProjection::MultiHead {
                heads: heads
                    .iter()
                    .map(|h| HeadProjection {
                        query: tape.constant(h.query.clone()),
                        key: tape.constant(h.key.clone()),
                        value: tape.constant(h.value.clone()),
                    })
                    .collect(),
                output: tape.constant(output.clone()),
            },
        };
        ShapeBank {
            key: tape.constant(self.key.clone()),
            value: tape.constant(self.value.clone()),
            projection,
        }
    }
}

fn attend(tape: &mut Tape, query: Var, key: Var, value: Var, kind: AttentionKind) -> Result<Var> {
    let key_t = tape.transpose(key)?;
    let scores = tape.matmul(query, key_t)?;
    let weights = match kind {
        AttentionKind::Relu => tape.relu(scores),
        AttentionKind::Softmax => {
            let width = tape.shape(query)[1] as f64;
            tape.softmax(scores, 1.0 / width.sqrt())?
        }
    };
    tape.matmul(weights, value)
}

/// Shape-bank attention over segments `seg[m, w]`; returns `seg + h`.
pub fn shape_bank_on_tape(
    tape: &mut Tape,
    seg: Var,
    bank: &ShapeBank<Var>,
    kind: AttentionKind,
) -> Result<Var> {
    let w = match tape.shape(seg) {
        [_, w] => *w,
        s => return Err(Error::shape("shape_bank", format!("expected [m, w], got {s:?}"))),
    };
    if tape.shape(bank.key).get(1) != Some(&w) || tape.shape(bank.value).get(1) != Some(&w) {
        return Err(Error::shape(
            "shape_bank",
            format!(
                "segment width {w} vs key {:?} / value {:?}",
                tape.shape(bank.key),
                tape.shape(bank.value)
            ),
        ));
    }
    let h = match &bank.projection {
        BankProjection::Single { query } => {
            let wq_t = tape.transpose(*query)?;
            let q = tape.matmul(seg, wq_t)?;
            attend(tape, q, bank.key, bank.value, kind)?
        }
        BankProjection::MultiHead { heads, output } => {
            if heads.is_empty() || w / heads.len() == 0 {
                return Err(Error::Config(format!(
                    "period {w} cannot be split into {} heads",
                    heads.len()
                )));
            }
            let mut outs = Vec::with_capacity(heads.len());
            for head in heads {
                let pq = tape.transpose(head.query)?;
                let pk = tape.transpose(head.key)?;
                let pv = tape.transpose(head.value)?;
                let q = tape.matmul(seg, pq)?;
                let k = tape.matmul(bank.key, pk)?;
                let v = tape.matmul(bank.value, pv)?;
                outs.push(attend(tape, q, k, v, kind)?);
            }
            let joined = tape.concat(&outs, 1)?;
            let wo_t = tape.transpose(*output)?;
            tape.matmul(joined, wo_t)?
        }
    };
    tape.add(seg, h)
}

/// Plain-tensor shape bank over `seg[..., w]`.
pub fn shape_bank_forward(seg: &Tensor, bank: &ShapeBankParams, kind: AttentionKind) -> Result<Tensor> {
    let w = *seg
        .shape()
        .last()
        .ok_or_else(|| Error::shape("shape_bank", "scalar input"))?;
    let mut tape = Tape::new();
    let flat = tape.constant(seg.reshape(&[seg.len() / w.max(1), w])?);
    let vars = bank.record(&mut tape);
    let out = shape_bank_on_tape(&mut tape, flat, &vars, kind)?;
    tape.value(out).reshape(seg.shape())
}

/// Phase-shared linear map over the segment axis.
///
/// `seg[r, k_in, w]` and `weight[k_in, k_out]` give
/// `out[r, i, l] = sum_j seg[r, j, l] * weight[j, i]`.
pub fn cross_period_on_tape(tape: &mut Tape, seg: Var, weight: Var) -> Result<Var> {
    let (rows, k_in, w) = match tape.shape(seg) {
        [r, k, w] => (*r, *k, *w),
        s => return Err(Error::shape("cross_period", format!("expected [r, k, w], got {s:?}"))),
    };
    let k_out = match tape.shape(weight) {
        [k, o] if *k == k_in => *o,
        s => {
            return Err(Error::shape(
                "cross_period",
                format!("segments [{rows}, {k_in}, {w}] vs weight {s:?}"),
            ))
        }
    };
    let by_phase = tape.permute(seg, &[0, 2, 1])?;
    let flat = tape.reshape(by_phase, &[rows * w, k_in])?;
    let mapped = tape.matmul(flat, weight)?;
    let back = tape.reshape(mapped, &[rows, w, k_out])?;
    tape.permute(back, &[0, 2, 1])
}

/// Plain-tensor cross-period map over `seg[..., k_in, w]`.
pub fn cross_period_forward(seg: &Tensor, weight: &Tensor) -> Result<Tensor> {
    let nd = seg.ndim();
    if nd < 2 {
        return Err(Error::shape("cross_period", format!("expected [.., k, w], got {:?}", seg.shape())));
    }
    let (k_in, w) = (seg.shape()[nd - 2], seg.shape()[nd - 1]);
    let rows = seg.len() / (k_in * w).max(1);
    let mut tape = Tape::new();
    let s = tape.constant(seg.reshape(&[rows, k_in, w])?);
    let wv = tape.constant(weight.clone());
    let out = cross_period_on_tape(&mut tape, s, wv)?;
    let mut shape = seg.shape().to_vec();
    shape[nd - 2] = tape.shape(out)[1];
    tape.value(out).reshape(&shape)
}

/// Splits the last axis of `x[r, len]` into whole periods, truncating the
/// tail: returns `seg[r, floor(len / w), w]`.
pub fn segment(tape: &mut Tape, x: Var, period: usize) -> Result<Var> {
    let (rows, len) = match tape.shape(x) {
        [r, l] => (*r, *l),
        s => return Err(Error::shape("segment", format!("expected [r, len], got {s:?}"))),
    };
    let k = len / period.max(1);
    if period == 0 || k == 0 {
        return Err(Error::Config(format!(
            "input length {len} is shorter than the period {period}"
        )));
    }
    let trimmed = if k * period == len {
        x
    } else {
        tape.slice(x, 1, 0, k * period)?
    };
    tape.reshape(trimmed, &[rows, k, period])
}

/// Flattens `seg[r, k, w]` back to `[r, out_len]`, dropping the overhang.
pub fn unsegment(tape: &mut Tape, seg: Var, out_len: usize) -> Result<Var> {
    let (rows, k, w) = match tape.shape(seg) {
        [r, k, w] => (*r, *k, *w),
        s => return Err(Error::shape("unsegment", format!("expected [r, k, w], got {s:?}"))),
    };
    if out_len > k * w {
        return Err(Error::shape(
            "unsegment",
            format!("need {out_len} steps from {k} segments of {w}"),
        ));
    }
    let flat = tape.reshape(seg, &[rows, k * w])?;
    if out_len == k * w {
        Ok(flat)
    } else {
        tape.slice(flat, 1, 0, out_len)
    }
}

/// One core block: segment, shape bank, cross-period map to
/// `ceil(out_len / w)` segments, flatten and trim to `out_len`.
pub fn core_block_on_tape(
    tape: &mut Tape,
    x: Var,
    bank: Option<&ShapeBank<Var>>,
    cross_weight: Var,
    period: usize,
    out_len: usize,
    kind: AttentionKind,
) -> Result<Var> {
    let seg = segment(tape, x, period)?;
    let (rows, k) = (tape.shape(seg)[0], tape.shape(seg)[1]);
    let mixed = match bank {
        Some(bank) => {
            let flat = tape.reshape(seg, &[rows * k, period])?;
            let out = shape_bank_on_tape(tape, flat, bank, kind)?;
            tape.reshape(out, &[rows, k, period])?
        }
        None => seg,
    };
    let k_out = tape.shape(cross_weight).get(1).copied().unwrap_or(0);
    if k_out != out_len.div_ceil(period) {
        return Err(Error::shape(
            "core_block",
            format!(
                "cross weight {:?} cannot produce {out_len} steps at period {period}",
                tape.shape(cross_weight)
            ),
        ));
    }
    let y = cross_period_on_tape(tape, mixed, cross_weight)?;
    unsegment(tape, y, out_len)
}

/// Plain-tensor core block over `x[n, len_in]`.
pub fn core_block_forward(
    x: &Tensor,
    bank: Option<&ShapeBankParams>,
    cross_weight: &Tensor,
    period: usize,
    out_len: usize,
    kind: AttentionKind,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let bank = bank.map(|b| b.record(&mut tape));
    let wv = tape.constant(cross_weight.clone());
    let out = core_block_on_tape(&mut tape, xv, bank.as_ref(), wv, period, out_len, kind)?;
    Ok(tape.value(out).clone())
}
