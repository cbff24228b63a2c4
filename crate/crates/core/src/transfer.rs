//! Target-policy initialization by similarity-weighted blending of source
//! policy weights.
//!
//! Every strategy produces raw similarities `d_i` between the target and each
//! source. Negative values are clamped to zero, the rest are normalized to
//! sum to one (uniform if all clamp to zero), and the target starts from
//! `sum_i w_i * weights(policy_i)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::align::AlignmentModel;
use crate::embed::{cosine_slices, EmbeddingTable};
use crate::env::Instruction;
use crate::error::{Error, Result};
use crate::policy::{unflatten, Architecture, PolicyNetwork};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Fresh random initialization; no transfer.
    Scratch,
    /// Cosine of raw instruction embeddings.
    Language,
    /// Cosine of projected instruction embeddings.
    Clip,
    /// Cosine of the projected target instruction against projected source
    /// policies.
    ClipCrossmodal,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Scratch, Strategy::Language, Strategy::Clip, Strategy::ClipCrossmodal];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Scratch => "scratch",
            Strategy::Language => "language",
            Strategy::Clip => "clip",
            Strategy::ClipCrossmodal => "clip-crossmodal",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown strategy {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityEntry {
    pub source: Instruction,
    pub raw: f64,
    pub clamped: f64,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityProfile {
    pub target: Instruction,
    pub strategy: Strategy,
    pub entries: Vec<SimilarityEntry>,
    /// Set when every clamped weight was zero and uniform weights were used.
    pub uniform_fallback: bool,
}

impl SimilarityProfile {
    /// Applies the clamp-and-normalize rule to raw similarities.
    pub fn from_raw(target: Instruction, strategy: Strategy, sources: &[Instruction], raw: Vec<f64>) -> Result<Self> {
        if sources.len() != raw.len() {
            return Err(Error::Shape(format!("{} sources but {} similarities", sources.len(), raw.len())));
        }
        if sources.is_empty() {
            return Err(Error::Shape("no source tasks".into()));
        }
        if raw.iter().any(|d| !d.is_finite()) {
            return Err(Error::Numeric("non-finite similarity".into()));
        }
        let clamped: Vec<f64> = raw.iter().map(|d| d.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        let uniform_fallback = total <= 0.0;
        let normalized: Vec<f64> = if uniform_fallback {
            vec![1.0 / raw.len() as f64; raw.len()]
        } else {
            clamped.iter().map(|c| c / total).collect()
        };
        let entries = sources
            .iter()
            .zip(raw)
            .zip(clamped)
            .zip(normalized)
            .map(|(((source, raw), clamped), normalized)| SimilarityEntry {
                source: source.clone(),
                raw,
                clamped,
                normalized,
            })
            .collect();
        Ok(SimilarityProfile { target, strategy, entries, uniform_fallback })
    }

    pub fn raw(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.raw).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.normalized).collect()
    }
}

pub fn language_similarities(
    target: &Instruction,
    sources: &[Instruction],
    table: &EmbeddingTable,
) -> Result<SimilarityProfile> {
    let t = table.embedding(&target.text)?;
    let raw = sources
        .iter()
        .map(|s| cosine_slices(t.values(), table.embedding(&s.text)?.values()))
        .collect::<Result<Vec<_>>>()?;
    SimilarityProfile::from_raw(target.clone(), Strategy::Language, sources, raw)
}

pub fn clip_similarities(
    target: &Instruction,
    sources: &[Instruction],
    model: &AlignmentModel,
    table: &EmbeddingTable,
) -> Result<SimilarityProfile> {
    check_text_dim(model, table)?;
    let t = model.project_text(table.embedding(&target.text)?.values())?;
    let raw = sources
        .iter()
        .map(|s| cosine_slices(&t, &model.project_text(table.embedding(&s.text)?.values())?))
        .collect::<Result<Vec<_>>>()?;
    SimilarityProfile::from_raw(target.clone(), Strategy::Clip, sources, raw)
}

pub fn crossmodal_similarities(
    target: &Instruction,
    sources: &[Instruction],
    model: &AlignmentModel,
    table: &EmbeddingTable,
    policies: &[PolicyNetwork],
) -> Result<SimilarityProfile> {
    check_text_dim(model, table)?;
    if policies.len() != sources.len() {
        return Err(Error::Shape(format!("{} sources but {} policies", sources.len(), policies.len())));
    }
    let t = model.project_text(table.embedding(&target.text)?.values())?;
    let raw = policies
        .iter()
        .map(|p| cosine_slices(&t, &model.project_policy(p.weights())?))
        .collect::<Result<Vec<_>>>()?;
    SimilarityProfile::from_raw(target.clone(), Strategy::ClipCrossmodal, sources, raw)
}

fn check_text_dim(model: &AlignmentModel, table: &EmbeddingTable) -> Result<()> {
    if model.text_dim() != table.dim() {
        return Err(Error::Shape(format!(
            "alignment model takes {}-dim embeddings, table holds {}",
            model.text_dim(),
            table.dim()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlendedInit {
    pub arch: Architecture,
    pub weights: Vec<f64>,
    pub provenance: SimilarityProfile,
}

impl BlendedInit {
    pub fn into_policy(self) -> Result<PolicyNetwork> {
        unflatten(&self.arch, self.weights)
    }
}

/// Convex combination of the source weight vectors with the profile's
/// normalized weights.
pub fn blend(profile: &SimilarityProfile, policies: &[PolicyNetwork]) -> Result<BlendedInit> {
    let arch = match policies.first() {
        Some(p) => p.arch().clone(),
        None => return Err(Error::Shape("no source policies".into())),
    };
    if let Some(p) = policies.iter().find(|p| p.arch() != &arch) {
        return Err(Error::Shape(format!(
            "cannot blend architectures {:?} and {:?}",
            arch.widths(),
            p.arch().widths()
        )));
    }
    let vectors: Vec<&[f64]> = policies.iter().map(PolicyNetwork::weights).collect();
    let weights = blend_weights(profile, &vectors)?;
    Ok(BlendedInit { arch, weights, provenance: profile.clone() })
}

/// [`blend`] on bare weight vectors of equal length.
pub fn blend_weights(profile: &SimilarityProfile, vectors: &[&[f64]]) -> Result<Vec<f64>> {
    if vectors.len() != profile.entries.len() {
        return Err(Error::Shape(format!(
            "profile has {} sources but {} weight vectors were given",
            profile.entries.len(),
            vectors.len()
        )));
    }
    let len = vectors[0].len();
    if vectors.iter().any(|v| v.len() != len) {
        return Err(Error::Shape("weight vectors differ in length".into()));
    }
    let mut out = vec![0.0; len];
    for (entry, v) in profile.entries.iter().zip(vectors) {
        if entry.normalized == 0.0 {
            continue;
        }
        out.iter_mut().zip(*v).for_each(|(acc, w)| *acc += entry.normalized * w);
    }
    if out.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("blended weights are not finite".into()));
    }
    Ok(out)
}
