use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ConvType, GraphMode, ModelConfig, Readout};
use super::input::{GraphInput, Schema, HOMO_NODE_TYPE, HOMO_RELATION};
use super::layers::{gat_layer, gat_shapes, hgt_layer, hgt_shapes, sage_layer, sage_shapes, AttentionTrace, Bound, LayerDims};
use crate::error::{Error, Result};
use crate::hetgraph::{HeteroGraph, HomoGraph};
use crate::numkit::{ParamSet, Tape, Tensor, Var};

pub const NUM_CLASSES: usize = 2;

#[derive(Clone, Copy, Debug)]
pub enum AnyGraph<'a> {
    Hetero(&'a HeteroGraph),
    Homo(&'a HomoGraph),
}

/// Result of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// `1 x 2` class logits.
    pub logits: Var,
    /// Final-layer representation of every node, one block per node type.
    pub nodes: Vec<Var>,
    pub traces: Vec<AttentionTrace>,
}

/// A two-layer graph classifier: architecture only, parameters live in a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    schema: Schema,
}

impl Model {
    pub fn new(config: ModelConfig, schema: Schema) -> Result<Self> {
        config.validate()?;
        schema.validate()?;
        if config.mode != schema.mode() {
            return Err(Error::Config(format!(
                "{:?} model with a {}-type schema",
                config.mode,
                schema.num_types()
            )));
        }
        Ok(Self { config, schema })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    fn layers(&self) -> [LayerDims; 2] {
        let h = self.config.hidden_dim;
        [1, 2].map(|index| LayerDims {
            index,
            in_dim: h,
            out_dim: h,
            last: index == 2,
        })
    }

    pub fn param_shapes(&self) -> Vec<(String, usize, usize)> {
        let h = self.config.hidden_dim;
        let mut out = Vec::new();
        for (t, &d) in self.schema.node_types.iter().zip(&self.schema.input_dims) {
            out.push((format!("proj.{t}.W"), d, h));
            out.push((format!("proj.{t}.b"), 1, h));
        }
        for dims in self.layers() {
            out.extend(match self.config.conv {
                ConvType::Sage => sage_shapes(&self.schema, &dims),
                ConvType::Gat => gat_shapes(&self.schema, &dims, self.config.heads),
                ConvType::Hgt => hgt_shapes(&self.schema, &dims, self.config.heads),
            });
        }
        out.push(("head.W".into(), h, NUM_CLASSES));
        out.push(("head.b".into(), 1, NUM_CLASSES));
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, r, c)| r * c).sum()
    }

    /// Glorot-uniform weights and zero biases, deterministic per seed.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, r, c) in self.param_shapes() {
            let t = if name.ends_with(".b") {
                Tensor::zeros(r, c)
            } else {
                let bound = (6.0 / (r + c) as f64).sqrt();
                let data = (0..r * c).map(|_| rng.random_range(-bound..=bound)).collect();
                Tensor::from_vec(r, c, data).expect("shape")
            };
            params.insert(name, t);
        }
        params
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        let shapes = self.param_shapes();
        for (name, r, c) in &shapes {
            match params.get(name) {
                None => return Err(Error::Contract(format!("missing parameter {name}"))),
                Some(t) if t.shape() != (*r, *c) => {
                    return Err(Error::dim("parameters", format!("{name} is {:?}, expected ({r}, {c})", t.shape())))
                }
                Some(t) if !t.is_finite() => return Err(Error::Numerical(format!("parameter {name} is not finite"))),
                Some(_) => {}
            }
        }
        if params.len() != shapes.len() {
            return Err(Error::Contract(format!("{} parameters, model defines {}", params.len(), shapes.len())));
        }
        Ok(())
    }

    pub fn prepare(&self, g: AnyGraph<'_>) -> Result<GraphInput> {
        match g {
            AnyGraph::Hetero(h) => GraphInput::from_hetero(h, &self.schema),
            AnyGraph::Homo(h) => GraphInput::from_homo(h, &self.schema),
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, g: &GraphInput) -> Result<Forward> {
        self.run(tape, p, g, false)
    }

    /// Like [`Model::forward`], also recording every attention softmax.
    pub fn forward_traced(&self, tape: &mut Tape, p: &Bound, g: &GraphInput) -> Result<Forward> {
        self.run(tape, p, g, true)
    }

    fn run(&self, tape: &mut Tape, p: &Bound, g: &GraphInput, trace: bool) -> Result<Forward> {
        g.check(&self.schema)?;
        let mut traces = Vec::new();
        let mut h = Vec::with_capacity(self.schema.num_types());
        for (t, name) in self.schema.node_types.iter().enumerate() {
            let x = tape.constant(g.features[t].clone());
            let w = p.var(&format!("proj.{name}.W"))?;
            let b = p.var(&format!("proj.{name}.b"))?;
            let xw = tape.matmul(x, w)?;
            h.push(tape.add(xw, b)?);
        }
        for dims in self.layers() {
            let tr = if trace { Some(&mut traces) } else { None };
            let heads = self.config.heads;
            h = match self.config.conv {
                ConvType::Sage => sage_layer(tape, p, &self.schema, g, &h, &dims)?,
                ConvType::Gat => gat_layer(tape, p, &self.schema, g, &h, &dims, heads, tr)?,
                ConvType::Hgt => hgt_layer(tape, p, &self.schema, g, &h, &dims, heads, tr)?,
            };
            if !dims.last {
                h = h.into_iter().map(|v| self.config.activation.apply(tape, v)).collect();
            }
        }
        let pooled = match self.config.readout {
            Readout::NewsNode => tape.gather_rows(h[g.news.0], &[g.news.1])?,
            Readout::MeanAll => {
                let all = tape.concat_rows(&h)?;
                tape.mean_rows(all)
            }
        };
        let w = p.var("head.W")?;
        let b = p.var("head.b")?;
        let z = tape.matmul(pooled, w)?;
        let logits = tape.add(z, b)?;
        Ok(Forward {
            logits,
            nodes: h,
            traces,
        })
    }

    pub fn logits(&self, params: &ParamSet, g: &GraphInput) -> Result<[f64; 2]> {
        let mut tape = Tape::new();
        let p = Bound::bind(&mut tape, params);
        let out = self.forward(&mut tape, &p, g)?;
        let z = tape.value(out.logits).data();
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite logits for {}", g.article_id)));
        }
        Ok([z[0], z[1]])
    }

    /// Mean class-weighted cross-entropy over `graphs`.
    pub fn batch_loss(&self, tape: &mut Tape, p: &Bound, graphs: &[&GraphInput], class_weights: &[f64]) -> Result<Var> {
        let mut rows = Vec::with_capacity(graphs.len());
        for g in graphs {
            rows.push(self.forward(tape, p, g)?.logits);
        }
        let logits = tape.concat_rows(&rows)?;
        let labels: Vec<usize> = graphs.iter().map(|g| g.label).collect();
        tape.weighted_cross_entropy(logits, &labels, class_weights)
    }

    pub fn loss_value(&self, params: &ParamSet, graphs: &[&GraphInput], class_weights: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let p = Bound::bind(&mut tape, params);
        let loss = self.batch_loss(&mut tape, &p, graphs, class_weights)?;
        tape.value(loss).item()
    }

    pub fn loss_and_grads(&self, params: &ParamSet, graphs: &[&GraphInput], class_weights: &[f64]) -> Result<(f64, ParamSet)> {
        let mut tape = Tape::new();
        let p = Bound::bind(&mut tape, params);
        let loss = self.batch_loss(&mut tape, &p, graphs, class_weights)?;
        tape.backward(loss)?;
        Ok((tape.value(loss).item()?, p.grads(&tape)))
    }
}

/// Hetero parameters whose per-type and per-relation weights all copy the single
/// node/edge weights of a homogeneous model with the same widths.
pub fn tie_to_homo(hetero: &Model, homo: &Model, homo_params: &ParamSet) -> Result<ParamSet> {
    if hetero.config.mode != GraphMode::Hetero || homo.config.mode != GraphMode::Homo {
        return Err(Error::Contract("tie_to_homo needs a hetero and a homo model".into()));
    }
    let hs = &hetero.schema;
    let mut out = ParamSet::new();
    for (name, r, c) in hetero.param_shapes() {
        let mapped: Vec<&str> = name
            .split('.')
            .map(|part| {
                if hs.node_types.iter().any(|t| t == part) {
                    HOMO_NODE_TYPE
                } else if hs.relations.iter().any(|rel| rel.name == part) {
                    HOMO_RELATION
                } else {
                    part
                }
            })
            .collect();
        let key = mapped.join(".");
        let t = homo_params
            .get(&key)
            .ok_or_else(|| Error::Contract(format!("no homogeneous counterpart {key} for {name}")))?;
        if t.shape() != (r, c) {
            return Err(Error::dim("tie_to_homo", format!("{name} is ({r}, {c}), {key} is {:?}", t.shape())));
        }
        out.insert(name, t.clone());
    }
    Ok(out)
}
