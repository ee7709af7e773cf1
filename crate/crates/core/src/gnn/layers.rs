//! Message-passing layers over a [`GraphInput`]. Each layer maps one hidden block
//! per node type to a new block per node type.

use std::collections::BTreeMap;

use super::input::{GraphInput, RelEdges, Schema};
use crate::error::{Error, Result};
use crate::numkit::{ParamSet, Tape, Tensor, Var};

pub const GAT_SLOPE: f64 = 0.2;

/// Parameters of a [`ParamSet`] registered on a tape.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn bind(tape: &mut Tape, params: &ParamSet) -> Self {
        let vars = params.iter().map(|(k, v)| (k.clone(), tape.param(v.clone()))).collect();
        Self { vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }

    /// Gradients after [`Tape::backward`]; parameters the loss never touched get zeros.
    pub fn grads(&self, tape: &Tape) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, &v) in &self.vars {
            let g = match tape.grad(v) {
                Some(g) => g.clone(),
                None => {
                    let (r, c) = tape.shape(v);
                    Tensor::zeros(r, c)
                }
            };
            out.insert(name.clone(), g);
        }
        out
    }
}

/// Position and widths of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerDims {
    pub index: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Final layers average attention heads instead of concatenating them.
    pub last: bool,
}

/// Softmax weights one attention computation assigned to edges.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTrace {
    pub layer: usize,
    pub head: usize,
    pub target_type: usize,
    /// Relation name, or `"joint"` when the softmax spans every relation into the type.
    pub scope: String,
    pub targets: Vec<usize>,
    pub num_targets: usize,
    pub weights: Vec<f64>,
}

impl AttentionTrace {
    /// Largest `|sum - 1|` over targets with at least one incoming edge.
    pub fn max_sum_deviation(&self) -> f64 {
        let mut sums = vec![0.0; self.num_targets];
        let mut seen = vec![false; self.num_targets];
        for (&t, &w) in self.targets.iter().zip(&self.weights) {
            sums[t] += w;
            seen[t] = true;
        }
        sums.iter()
            .zip(&seen)
            .filter(|(_, &s)| s)
            .map(|(x, _)| (x - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

fn check_inputs(tape: &Tape, schema: &Schema, g: &GraphInput, h: &[Var], dims: &LayerDims) -> Result<()> {
    if h.len() != schema.num_types() {
        return Err(Error::Contract(format!("{} feature blocks for {} node types", h.len(), schema.num_types())));
    }
    for (t, &v) in h.iter().enumerate() {
        let shape = tape.shape(v);
        if shape != (g.num_nodes(t), dims.in_dim) {
            return Err(Error::dim(
                "layer input",
                format!("{} block is {shape:?}, expected ({}, {})", schema.node_types[t], g.num_nodes(t), dims.in_dim),
            ));
        }
    }
    Ok(())
}

fn gat_head_width(dims: &LayerDims, heads: usize) -> usize {
    if dims.last {
        dims.out_dim
    } else {
        dims.out_dim / heads
    }
}

pub fn sage_shapes(schema: &Schema, dims: &LayerDims) -> Vec<(String, usize, usize)> {
    let l = dims.index;
    let mut out: Vec<_> = schema
        .node_types
        .iter()
        .map(|t| (format!("l{l}.self.{t}"), dims.in_dim, dims.out_dim))
        .collect();
    out.extend(schema.relations.iter().map(|r| (format!("l{l}.rel.{}", r.name), dims.in_dim, dims.out_dim)));
    out
}

pub fn gat_shapes(schema: &Schema, dims: &LayerDims, heads: usize) -> Vec<(String, usize, usize)> {
    let l = dims.index;
    let w = gat_head_width(dims, heads);
    let mut out: Vec<_> = schema
        .node_types
        .iter()
        .map(|t| (format!("l{l}.self.{t}"), dims.in_dim, dims.out_dim))
        .collect();
    for r in &schema.relations {
        for k in 0..heads {
            let p = format!("l{l}.rel.{}.h{k}", r.name);
            out.push((format!("{p}.W"), dims.in_dim, w));
            out.push((format!("{p}.a_src"), 1, w));
            out.push((format!("{p}.a_dst"), 1, w));
        }
    }
    out
}

pub fn hgt_shapes(schema: &Schema, dims: &LayerDims, heads: usize) -> Vec<(String, usize, usize)> {
    let l = dims.index;
    let w = dims.out_dim / heads;
    let mut out = Vec::new();
    for t in &schema.node_types {
        for k in 0..heads {
            for m in ["K", "Q", "V"] {
                out.push((format!("l{l}.{t}.h{k}.{m}"), dims.in_dim, w));
            }
        }
        out.push((format!("l{l}.{t}.A"), dims.out_dim, dims.out_dim));
        if dims.in_dim != dims.out_dim {
            out.push((format!("l{l}.{t}.res"), dims.in_dim, dims.out_dim));
        }
    }
    for r in &schema.relations {
        for k in 0..heads {
            out.push((format!("l{l}.rel.{}.h{k}.att", r.name), w, w));
            out.push((format!("l{l}.rel.{}.h{k}.msg", r.name), w, w));
        }
    }
    out
}

/// `h'_t = W_self,t h_t + sum_r W_r mean_{s -r-> t} h_s`, before activation.
pub fn sage_layer(
    tape: &mut Tape,
    p: &Bound,
    schema: &Schema,
    g: &GraphInput,
    h: &[Var],
    dims: &LayerDims,
) -> Result<Vec<Var>> {
    check_inputs(tape, schema, g, h, dims)?;
    let l = dims.index;
    let mut out = Vec::with_capacity(h.len());
    for (t, name) in schema.node_types.iter().enumerate() {
        let w_self = p.var(&format!("l{l}.self.{name}"))?;
        out.push(tape.matmul(h[t], w_self)?);
    }
    for (r, e) in schema.relations.iter().zip(&g.edges) {
        if e.is_empty() {
            continue;
        }
        let msgs = tape.gather_rows(h[r.src], &e.src)?;
        let mean = tape.segment_mean(msgs, &e.dst, g.num_nodes(r.dst))?;
        let w = p.var(&format!("l{l}.rel.{}", r.name))?;
        let m = tape.matmul(mean, w)?;
        out[r.dst] = tape.add(out[r.dst], m)?;
    }
    Ok(out)
}

fn gat_relation_head(
    tape: &mut Tape,
    p: &Bound,
    prefix: &str,
    h_src: Var,
    h_dst: Var,
    e: &RelEdges,
    num_targets: usize,
) -> Result<(Var, Var)> {
    let w = p.var(&format!("{prefix}.W"))?;
    let z_src = tape.matmul(h_src, w)?;
    let z_dst = if h_src == h_dst { z_src } else { tape.matmul(h_dst, w)? };
    let a_src = p.var(&format!("{prefix}.a_src"))?;
    let a_dst = p.var(&format!("{prefix}.a_dst"))?;
    let s_src = tape.mul(z_src, a_src)?;
    let s_src = tape.row_sum(s_src);
    let s_dst = tape.mul(z_dst, a_dst)?;
    let s_dst = tape.row_sum(s_dst);
    let es = tape.gather_rows(s_src, &e.src)?;
    let ed = tape.gather_rows(s_dst, &e.dst)?;
    let score = tape.add(ed, es)?;
    let score = tape.leaky_relu(score, GAT_SLOPE);
    let alpha = tape.segment_softmax(score, &e.dst, num_targets)?;
    let msgs = tape.gather_rows(z_src, &e.src)?;
    let weighted = tape.scale_rows(msgs, alpha)?;
    Ok((tape.segment_sum(weighted, &e.dst, num_targets)?, alpha))
}

/// Per-relation attention over each target's in-neighbors plus a self term per
/// target type; heads are concatenated on hidden layers and averaged on the last.
#[allow(clippy::too_many_arguments)]
pub fn gat_layer(
    tape: &mut Tape,
    p: &Bound,
    schema: &Schema,
    g: &GraphInput,
    h: &[Var],
    dims: &LayerDims,
    heads: usize,
    mut traces: Option<&mut Vec<AttentionTrace>>,
) -> Result<Vec<Var>> {
    check_inputs(tape, schema, g, h, dims)?;
    let l = dims.index;
    let mut out = Vec::with_capacity(h.len());
    for (t, name) in schema.node_types.iter().enumerate() {
        let w_self = p.var(&format!("l{l}.self.{name}"))?;
        out.push(tape.matmul(h[t], w_self)?);
    }
    for (r, e) in schema.relations.iter().zip(&g.edges) {
        if e.is_empty() {
            continue;
        }
        let n = g.num_nodes(r.dst);
        let mut head_out = Vec::with_capacity(heads);
        for k in 0..heads {
            let prefix = format!("l{l}.rel.{}.h{k}", r.name);
            let (m, alpha) = gat_relation_head(tape, p, &prefix, h[r.src], h[r.dst], e, n)?;
            if let Some(tr) = traces.as_deref_mut() {
                tr.push(AttentionTrace {
                    layer: l,
                    head: k,
                    target_type: r.dst,
                    scope: r.name.clone(),
                    targets: e.dst.clone(),
                    num_targets: n,
                    weights: tape.value(alpha).data().to_vec(),
                });
            }
            head_out.push(m);
        }
        let combined = if dims.last {
            let mut acc = head_out[0];
            for &m in &head_out[1..] {
                acc = tape.add(acc, m)?;
            }
            tape.scale(acc, 1.0 / heads as f64)
        } else if heads == 1 {
            head_out[0]
        } else {
            tape.concat_cols(&head_out)?
        };
        out[r.dst] = tape.add(out[r.dst], combined)?;
    }
    Ok(out)
}

/// Typed attention with one softmax per target across all incoming relations,
/// followed by a per-type output map and a residual connection.
#[allow(clippy::too_many_arguments)]
pub fn hgt_layer(
    tape: &mut Tape,
    p: &Bound,
    schema: &Schema,
    g: &GraphInput,
    h: &[Var],
    dims: &LayerDims,
    heads: usize,
    mut traces: Option<&mut Vec<AttentionTrace>>,
) -> Result<Vec<Var>> {
    check_inputs(tape, schema, g, h, dims)?;
    let l = dims.index;
    let w = dims.out_dim / heads;
    let inv_sqrt = 1.0 / (w as f64).sqrt();
    // per type, per head: (K, Q, V) projections of every node
    let mut kqv = Vec::with_capacity(h.len());
    for (t, name) in schema.node_types.iter().enumerate() {
        let mut per_head = Vec::with_capacity(heads);
        for k in 0..heads {
            let mut proj = [h[t]; 3];
            for (slot, m) in proj.iter_mut().zip(["K", "Q", "V"]) {
                let wm = p.var(&format!("l{l}.{name}.h{k}.{m}"))?;
                *slot = tape.matmul(h[t], wm)?;
            }
            per_head.push(proj);
        }
        kqv.push(per_head);
    }

    let mut out = Vec::with_capacity(h.len());
    for (t, name) in schema.node_types.iter().enumerate() {
        let incoming: Vec<(usize, &RelEdges)> = schema
            .relations
            .iter()
            .zip(&g.edges)
            .enumerate()
            .filter(|(_, (r, e))| r.dst == t && !e.is_empty())
            .map(|(i, (_, e))| (i, e))
            .collect();
        let residual = if dims.in_dim == dims.out_dim {
            h[t]
        } else {
            let wr = p.var(&format!("l{l}.{name}.res"))?;
            tape.matmul(h[t], wr)?
        };
        if incoming.is_empty() {
            out.push(residual);
            continue;
        }
        let n = g.num_nodes(t);
        let segments: Vec<usize> = incoming.iter().flat_map(|(_, e)| e.dst.iter().copied()).collect();
        let mut head_out = Vec::with_capacity(heads);
        for k in 0..heads {
            let mut logits = Vec::with_capacity(incoming.len());
            let mut msgs = Vec::with_capacity(incoming.len());
            for &(ri, e) in &incoming {
                let r = &schema.relations[ri];
                let [ks, _, vs] = kqv[r.src][k];
                let q = kqv[t][k][1];
                let att = p.var(&format!("l{l}.rel.{}.h{k}.att", r.name))?;
                let msg = p.var(&format!("l{l}.rel.{}.h{k}.msg", r.name))?;
                let ke = tape.gather_rows(ks, &e.src)?;
                let ka = tape.matmul(ke, att)?;
                let qe = tape.gather_rows(q, &e.dst)?;
                let dot = tape.mul(ka, qe)?;
                let dot = tape.row_sum(dot);
                logits.push(tape.scale(dot, inv_sqrt));
                let ve = tape.gather_rows(vs, &e.src)?;
                msgs.push(tape.matmul(ve, msg)?);
            }
            let logits = tape.concat_rows(&logits)?;
            let alpha = tape.segment_softmax(logits, &segments, n)?;
            if let Some(tr) = traces.as_deref_mut() {
                tr.push(AttentionTrace {
                    layer: l,
                    head: k,
                    target_type: t,
                    scope: "joint".into(),
                    targets: segments.clone(),
                    num_targets: n,
                    weights: tape.value(alpha).data().to_vec(),
                });
            }
            let msgs = tape.concat_rows(&msgs)?;
            let weighted = tape.scale_rows(msgs, alpha)?;
            head_out.push(tape.segment_sum(weighted, &segments, n)?);
        }
        let message = if heads == 1 { head_out[0] } else { tape.concat_cols(&head_out)? };
        let a = p.var(&format!("l{l}.{name}.A"))?;
        let mapped = tape.matmul(message, a)?;
        out.push(tape.add(mapped, residual)?);
    }
    Ok(out)
}
