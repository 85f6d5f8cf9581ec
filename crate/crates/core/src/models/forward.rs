use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{input_name, HeadKind, ModelConfig, Variant};
use super::ModelError;
use crate::graph::{HeteroGraph, NodeType, Relation};
use crate::ndiff::{Bound, ParamStore, Scalar, Tape, Tensor, Var};

/// One attention module's weights for every report of a batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadAttention {
    pub head: HeadKind,
    /// Per report, weight per neighbor slot (mean over internal heads);
    /// masked or absent slots are exactly 0.
    pub alpha: Vec<[f64; 15]>,
    /// Per report and internal head, the unaveraged weights.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub internal: Vec<Vec<[f64; 15]>>,
    /// Reports for which the head had no allowed neighbor.
    pub empty: Vec<bool>,
}

pub type AttentionRecord = Vec<HeadAttention>;

pub struct ForwardOut {
    /// Raw class scores, one row per report.
    pub logits: Var,
    /// Layer-1 output per node type (`None` when the type has no nodes).
    pub h1: Vec<Option<Var>>,
    pub h_report: Var,
    pub attention: AttentionRecord,
    /// Reports whose star has no neighbor at all.
    pub isolated: Vec<usize>,
}

fn linear<T: Scalar>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var) -> Result<Var, ModelError> {
    let y = tape.matmul(x, p.var(&format!("{name}.w"))?)?;
    Ok(tape.add_row(y, p.var(&format!("{name}.b"))?)?)
}

fn layernorm<T: Scalar>(tape: &mut Tape<T>, p: &Bound, name: &str, x: Var) -> Result<Var, ModelError> {
    let y = tape.layernorm(x, 1)?;
    let y = tape.mul_row(y, p.var(&format!("{name}.g"))?)?;
    Ok(tape.add_row(y, p.var(&format!("{name}.b"))?)?)
}

fn zeros<T: Scalar>(tape: &mut Tape<T>, rows: usize, cols: usize) -> Var {
    tape.constant(Tensor::zeros(&[rows, cols]))
}

/// Relations whose destination is `t`, in relation-index order.
fn incoming(t: NodeType) -> Vec<Relation> {
    Relation::all().into_iter().filter(|r| r.dst() == t).collect()
}

struct Ctx<'a, R: ?Sized> {
    cfg: &'a ModelConfig,
    train: bool,
    rng: &'a mut R,
}

/// Input projections; `report_type` rows look up the type embedding.
fn project_inputs<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound,
    g: &HeteroGraph,
) -> Result<Vec<Option<Var>>, ModelError> {
    let mut h = Vec::with_capacity(NodeType::COUNT);
    for t in NodeType::ALL {
        let n = g.count(t);
        if n == 0 {
            h.push(None);
            continue;
        }
        let x = if t == NodeType::ReportType {
            let idx: Vec<Option<u32>> = g.features[t.index()].data().iter().map(|&v| Some(v as u32)).collect();
            let e = tape.gather_rows(p.var("type_emb")?, &idx)?;
            linear(tape, p, "type_proj", e)?
        } else {
            let f = tape.constant(g.features[t.index()].cast());
            linear(tape, p, &input_name(t), f)?
        };
        h.push(Some(x));
    }
    Ok(h)
}

/// One SAGE round: shared self map plus a basis-decomposed map per relation
/// applied to the mean over that relation's sources.
fn sage_layer<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    p: &Bound,
    g: &HeteroGraph,
    h: &[Option<Var>],
    layer: usize,
    only: Option<NodeType>,
    ctx: &mut Ctx<'_, R>,
) -> Result<Vec<Option<Var>>, ModelError> {
    let d = ctx.cfg.hidden;
    let name = |s: &str| format!("l{layer}.{s}");
    let mut out = vec![None; NodeType::COUNT];
    for t in NodeType::ALL {
        if only.is_some_and(|o| o != t) {
            continue;
        }
        let Some(x) = h[t.index()] else { continue };
        let n = g.count(t);
        let mut z = tape.matmul(x, p.var(&name("self"))?)?;
        let rels = incoming(t);
        if !rels.is_empty() {
            let mut aggs = Vec::with_capacity(rels.len());
            for r in &rels {
                let e = g.edge_list(*r);
                let agg = match h[r.src().index()] {
                    Some(src) if !e.is_empty() => tape.scatter_mean(src, &e.src, &e.dst, n)?,
                    _ => zeros(tape, n, d),
                };
                aggs.push(agg);
            }
            let idx: Vec<Option<u32>> = rels.iter().map(|r| Some(r.index() as u32)).collect();
            let coef = tape.gather_rows(p.var(&name("coef"))?, &idx)?;
            let w = tape.matmul(coef, p.var(&name("bases"))?)?;
            let w = tape.reshape(w, &[rels.len() * d, d])?;
            let cat = if aggs.len() == 1 { aggs[0] } else { tape.concat(&aggs, 1)? };
            let m = tape.matmul(cat, w)?;
            z = tape.add(z, m)?;
        }
        let z = tape.add_row(z, p.var(&name("bias"))?)?;
        let z = layernorm(tape, p, &name("ln"), z)?;
        let z = tape.relu(z)?;
        let mut z = tape.dropout(z, ctx.cfg.dropout, ctx.train, ctx.rng)?;
        if layer == 2 {
            z = tape.add(z, x)?;
        }
        out[t.index()] = Some(z);
    }
    Ok(out)
}

fn slot_index(g: &HeteroGraph, t: NodeType) -> Vec<Option<u32>> {
    let s = t.slot().expect("neighbor");
    g.slots.iter().map(|row| row[s]).collect()
}

/// Rows of each report's neighbor in slot order, stacked `[15·N × d]`
/// (row `s·N + n`), and the mask of slots absent from the star.
fn gather_neighbors<T: Scalar>(
    tape: &mut Tape<T>,
    g: &HeteroGraph,
    h: &[Option<Var>],
    d: usize,
) -> Result<Var, ModelError> {
    let n = g.n_reports();
    let mut parts = Vec::with_capacity(15);
    for t in NodeType::NEIGHBORS {
        let part = match h[t.index()] {
            Some(table) => tape.gather_rows(table, &slot_index(g, t))?,
            None => zeros(tape, n, d),
        };
        parts.push(part);
    }
    Ok(tape.concat(&parts, 0)?)
}

/// Block indicator `[d × H]`: column `k` selects internal head `k`'s lanes.
fn head_selector<T: Scalar>(d: usize, heads: usize) -> Tensor<T> {
    let w = d / heads;
    let mut t = Tensor::zeros(&[d, heads]);
    for i in 0..d {
        t.data_mut()[i * heads + i / w] = T::one();
    }
    t
}

#[allow(clippy::too_many_arguments)]
fn attention_head<T: Scalar>(
    tape: &mut Tape<T>,
    p: &Bound,
    g: &HeteroGraph,
    cfg: &ModelConfig,
    kind: HeadKind,
    query: Var,
    h_r: Var,
    neigh: Var,
) -> Result<(Var, HeadAttention), ModelError> {
    let (n, d, heads) = (g.n_reports(), cfg.hidden, cfg.attn_heads);
    let name = format!("head.{}", kind.name());
    let q = linear(tape, p, &format!("{name}.q"), query)?;
    let k = linear(tape, p, &format!("{name}.k"), neigh)?;
    let v = linear(tape, p, &format!("{name}.v"), neigh)?;

    let rep: Vec<Option<u32>> = (0..15).flat_map(|_| (0..n as u32).map(Some)).collect();
    let q_rep = tape.gather_rows(q, &rep)?;
    let qk = tape.mul(q_rep, k)?;
    let sel = tape.constant(head_selector::<T>(d, heads));
    let scores = tape.matmul(qk, sel)?;
    let scores = tape.scale(scores, T::of(1.0 / ((d / heads) as f64).sqrt()))?;

    let allowed = kind.allowed();
    let mut mask = vec![false; 15 * n * heads];
    let mut empty = vec![true; n];
    for (s, t) in NodeType::NEIGHBORS.into_iter().enumerate() {
        for (r, slots) in g.slots.iter().enumerate() {
            let ok = allowed.contains(t) && slots[s].is_some();
            if ok {
                empty[r] = false;
            }
            for k in 0..heads {
                mask[(s * n + r) * heads + k] = !ok;
            }
        }
    }
    let scores = tape.masked_fill(scores, &mask, T::neg_infinity())?;
    let scores = tape.reshape(scores, &[15, n, heads])?;
    let alpha = tape.softmax(scores, 0)?;
    let alpha = tape.reshape(alpha, &[15 * n, heads])?;

    let sel_t = tape.constant(transpose(&head_selector::<T>(d, heads)));
    let wide = tape.matmul(alpha, sel_t)?;
    let weighted = tape.mul(wide, v)?;
    let weighted = tape.reshape(weighted, &[15, n, d])?;
    let summed = tape.sum_axis(weighted, 0)?;
    let summed = tape.reshape(summed, &[n, d])?;
    let o = tape.add(h_r, summed)?;
    let o = layernorm(tape, p, &format!("{name}.ln"), o)?;

    let a = tape.value(alpha).data();
    let internal = (0..n)
        .map(|r| {
            (0..heads)
                .map(|k| std::array::from_fn(|s| a[(s * n + r) * heads + k].as_f64()))
                .collect()
        })
        .collect();
    let alpha_rows = (0..n)
        .map(|r| {
            let mut row = [0.0; 15];
            for (s, slot) in row.iter_mut().enumerate() {
                let base = (s * n + r) * heads;
                *slot = a[base..base + heads].iter().map(|x| x.as_f64()).sum::<f64>() / heads as f64;
            }
            row
        })
        .collect();
    Ok((
        o,
        HeadAttention {
            head: kind,
            alpha: alpha_rows,
            internal,
            empty,
        },
    ))
}

fn transpose<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let (m, n) = (t.rows(), t.cols());
    let mut out = Tensor::zeros(&[n, m]);
    for i in 0..m {
        for j in 0..n {
            out.data_mut()[j * m + i] = t.get2(i, j);
        }
    }
    out
}

/// Full forward pass over `g` with parameters already bound on `tape`.
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    p: &Bound,
    cfg: &ModelConfig,
    g: &HeteroGraph,
    train: bool,
    rng: &mut R,
) -> Result<ForwardOut, ModelError> {
    let n = g.n_reports();
    if n == 0 {
        return Err(ModelError::Invalid("graph has no report nodes".into()));
    }
    let d = cfg.hidden;
    let mut ctx = Ctx { cfg, train, rng };
    let h0 = project_inputs(tape, p, g)?;
    let h1 = sage_layer(tape, p, g, &h0, 1, None, &mut ctx)?;
    let heads = cfg.variant.heads();
    let only = heads.is_empty().then_some(NodeType::Report);
    let h2 = sage_layer(tape, p, g, &h1, 2, only, &mut ctx)?;
    let h_r = h2[NodeType::Report.index()].expect("reports present");

    let mut attention = Vec::new();
    let rep = if cfg.variant == Variant::Inductive {
        h_r
    } else {
        let rt = match h2[NodeType::ReportType.index()] {
            Some(table) => tape.gather_rows(table, &slot_index(g, NodeType::ReportType))?,
            None => zeros(tape, n, d),
        };
        let query = tape.add(h_r, rt)?;
        let neigh = gather_neighbors(tape, g, &h2, d)?;
        let mut outs = Vec::with_capacity(heads.len());
        for &k in heads {
            let (o, a) = attention_head(tape, p, g, cfg, k, query, h_r, neigh)?;
            outs.push(o);
            attention.push(a);
        }
        let cat = if outs.len() == 1 { outs[0] } else { tape.concat(&outs, 1)? };
        let z = linear(tape, p, "comb.1", cat)?;
        let z = tape.relu(z)?;
        let z = layernorm(tape, p, "comb.ln", z)?;
        linear(tape, p, "comb.2", z)?
    };
    let z = linear(tape, p, "cls.1", rep)?;
    let z = tape.relu(z)?;
    let logits = linear(tape, p, "cls.2", z)?;
    Ok(ForwardOut {
        logits,
        h1,
        h_report: h_r,
        attention,
        isolated: g.isolated_reports(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub logits: Vec<[f64; 3]>,
    pub attention: AttentionRecord,
    pub isolated: Vec<usize>,
}

impl Prediction {
    pub fn classes(&self) -> Vec<usize> {
        self.logits.iter().map(|l| argmax(l)).collect()
    }

    pub fn probabilities(&self, i: usize) -> [f64; 3] {
        let l = self.logits[i];
        let m = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = l.map(|x| (x - m).exp());
        let s: f64 = e.iter().sum();
        e.map(|x| x / s)
    }
}

pub(crate) fn argmax(l: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in l.iter().enumerate() {
        if v > l[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode forward on frozen parameters.
pub fn predict(params: &ParamStore<f32>, cfg: &ModelConfig, g: &HeteroGraph) -> Result<Prediction, ModelError> {
    let mut tape = Tape::new();
    let p = Bound::bind(&mut tape, params, false);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let out = forward(&mut tape, &p, cfg, g, false, &mut rng)?;
    let logits = tape
        .value(out.logits)
        .data()
        .chunks_exact(3)
        .map(|c| [c[0] as f64, c[1] as f64, c[2] as f64])
        .collect();
    Ok(Prediction {
        logits,
        attention: out.attention,
        isolated: out.isolated,
    })
}
