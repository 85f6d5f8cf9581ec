use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::graph::{NodeType, Relation, TypeSet};
use crate::ndiff::{ParamStore, Scalar};
use crate::synthgen::Category;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Inductive,
    Attention,
    Multihead,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Inductive, Variant::Attention, Variant::Multihead];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Inductive => "inductive",
            Variant::Attention => "attention",
            Variant::Multihead => "multihead",
        }
    }

    pub fn heads(self) -> &'static [HeadKind] {
        match self {
            Variant::Inductive => &[],
            Variant::Attention => &[HeadKind::Full],
            Variant::Multihead => &[HeadKind::Sensor, HeadKind::Context, HeadKind::Full],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Sensor,
    Context,
    Full,
}

impl HeadKind {
    pub fn name(self) -> &'static str {
        match self {
            HeadKind::Sensor => "sensor",
            HeadKind::Context => "context",
            HeadKind::Full => "full",
        }
    }

    /// Neighbor types this head may attend to.
    pub fn allowed(self) -> TypeSet {
        match self {
            HeadKind::Sensor => NodeType::SENSORS.into_iter().collect(),
            HeadKind::Context => NodeType::CONTEXT.into_iter().chain([NodeType::Location]).collect(),
            HeadKind::Full => TypeSet::all_neighbors(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub hidden: usize,
    /// Internal heads per attention module.
    pub attn_heads: usize,
    /// Shared bases for the per-relation maps.
    pub bases: usize,
    pub dropout: f64,
    pub type_embedding: usize,
}

impl ModelConfig {
    pub fn new(variant: Variant, hidden: usize) -> Self {
        Self {
            variant,
            hidden,
            attn_heads: 4,
            bases: 4,
            dropout: 0.3,
            type_embedding: 8,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden == 0 || self.attn_heads == 0 || self.hidden % self.attn_heads != 0 {
            return Err(ModelError::Invalid(format!(
                "hidden width {} must be a positive multiple of {} heads",
                self.hidden, self.attn_heads
            )));
        }
        if self.bases == 0 || !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Invalid("need >= 1 basis and dropout in [0, 1)".into()));
        }
        Ok(())
    }
}

pub(crate) fn input_name(t: NodeType) -> String {
    format!("in.{}", t.name())
}

/// Glorot-uniform linear maps, zero biases, unit layernorm gains, N(0, 0.02)
/// type embeddings.
pub fn init_params<T: Scalar, R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<ParamStore<T>, ModelError> {
    cfg.validate()?;
    let d = cfg.hidden;
    let mut p = ParamStore::new();
    let linear = |p: &mut ParamStore<T>, name: &str, i: usize, o: usize, rng: &mut R| {
        p.init_linear(&format!("{name}.w"), i, o, rng);
        p.init_const(&format!("{name}.b"), &[1, o], 0.0);
    };
    let layernorm = |p: &mut ParamStore<T>, name: &str, n: usize| {
        p.init_const(&format!("{name}.g"), &[1, n], 1.0);
        p.init_const(&format!("{name}.b"), &[1, n], 0.0);
    };

    for t in NodeType::ALL {
        if t != NodeType::ReportType {
            linear(&mut p, &input_name(t), t.dim(), d, rng);
        }
    }
    p.init_normal("type_emb", &[Category::ALL.len(), cfg.type_embedding], 0.02, rng);
    linear(&mut p, "type_proj", cfg.type_embedding, d, rng);

    for l in 1..=2 {
        p.init_linear(&format!("l{l}.self"), d, d, rng);
        p.init_const(&format!("l{l}.bias"), &[1, d], 0.0);
        p.init_linear(&format!("l{l}.coef"), Relation::COUNT, cfg.bases, rng);
        let limit = (6.0 / (2 * d) as f64).sqrt();
        let bases = (0..cfg.bases * d * d).map(|_| T::of(rng.random_range(-limit..limit))).collect();
        p.insert(
            format!("l{l}.bases"),
            crate::ndiff::Tensor::new(&[cfg.bases, d * d], bases).expect("sized"),
        );
        layernorm(&mut p, &format!("l{l}.ln"), d);
    }

    let heads = cfg.variant.heads();
    for h in heads {
        let n = format!("head.{}", h.name());
        for m in ["q", "k", "v"] {
            linear(&mut p, &format!("{n}.{m}"), d, d, rng);
        }
        layernorm(&mut p, &format!("{n}.ln"), d);
    }
    if !heads.is_empty() {
        linear(&mut p, "comb.1", heads.len() * d, 2 * d, rng);
        layernorm(&mut p, "comb.ln", 2 * d);
        linear(&mut p, "comb.2", 2 * d, d, rng);
    }
    linear(&mut p, "cls.1", d, d, rng);
    linear(&mut p, "cls.2", d, 3, rng);
    Ok(p)
}
