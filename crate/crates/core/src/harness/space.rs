//! Hyperparameter search spaces and random-search sampling.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DgmcConfig, GcnAlignConfig, ModelConfig, NormalizationMode, RdgcnConfig, SimilarityKind};
use crate::training::TrainConfig;

/// One hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    fn rank(&self) -> u8 {
        match self {
            ParamValue::Bool(_) => 0,
            ParamValue::Int(_) => 1,
            ParamValue::Float(_) => 2,
            ParamValue::Str(_) => 3,
        }
    }

    /// Total order used to sort table rows.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ParamValue::Bool(a), ParamValue::Bool(b)) => a.cmp(b),
            (ParamValue::Int(a), ParamValue::Int(b)) => a.cmp(b),
            (ParamValue::Float(a), ParamValue::Float(b)) => a.total_cmp(b),
            (ParamValue::Str(a), ParamValue::Str(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }

    fn str(s: &str) -> Self {
        ParamValue::Str(s.to_owned())
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

/// A sampled configuration, keyed by hyperparameter name.
pub type Configuration = BTreeMap<String, ParamValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamKind {
    Categorical {
        values: Vec<ParamValue>,
    },
    /// Inclusive integer range.
    IntRange {
        low: i64,
        high: i64,
    },
    LogUniform {
        low: f64,
        high: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

impl ParamSpec {
    fn categorical(name: &str, values: Vec<ParamValue>) -> Self {
        Self {
            name: name.to_owned(),
            kind: ParamKind::Categorical { values },
        }
    }

    fn bools(name: &str) -> Self {
        Self::categorical(name, vec![ParamValue::Bool(false), ParamValue::Bool(true)])
    }

    fn strs(name: &str, values: &[&str]) -> Self {
        Self::categorical(name, values.iter().map(|s| ParamValue::str(s)).collect())
    }

    fn ints(name: &str, values: impl IntoIterator<Item = i64>) -> Self {
        Self::categorical(name, values.into_iter().map(ParamValue::Int).collect())
    }

    fn floats(name: &str, values: impl IntoIterator<Item = f64>) -> Self {
        Self::categorical(name, values.into_iter().map(ParamValue::Float).collect())
    }

    fn int_range(name: &str, low: i64, high: i64) -> Self {
        Self {
            name: name.to_owned(),
            kind: ParamKind::IntRange { low, high },
        }
    }

    fn log_uniform(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.to_owned(),
            kind: ParamKind::LogUniform { low, high },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("parameter `{}`: {msg}", self.name)));
        match &self.kind {
            ParamKind::Categorical { values } if values.is_empty() => bad("no choices".into()),
            ParamKind::IntRange { low, high } if low > high => bad(format!("empty range {low}..={high}")),
            ParamKind::LogUniform { low, high }
                if !(low.is_finite() && high.is_finite() && *low > 0.0 && low < high) =>
            {
                bad(format!(
                    "log-uniform bounds [{low}, {high}] must satisfy 0 < low < high"
                ))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match &self.kind {
            ParamKind::Categorical { values } => values[rng.random_range(0..values.len())].clone(),
            ParamKind::IntRange { low, high } => ParamValue::Int(rng.random_range(*low..=*high)),
            ParamKind::LogUniform { low, high } => {
                let (a, b) = (low.ln(), high.ln());
                let u: f64 = rng.random();
                ParamValue::Float((a + u * (b - a)).exp().clamp(*low, *high))
            }
        }
    }

    /// Whether `value` is a possible draw.
    pub fn contains(&self, value: &ParamValue) -> bool {
        match (&self.kind, value) {
            (ParamKind::Categorical { values }, v) => values.contains(v),
            (ParamKind::IntRange { low, high }, ParamValue::Int(i)) => (low..=high).contains(&i),
            (ParamKind::LogUniform { low, high }, ParamValue::Float(x)) => (low..=high).contains(&x),
            _ => false,
        }
    }
}

/// Which model a search space configures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchModel {
    Rdgcn,
    Dgmc,
    GcnAlign,
}

impl SearchModel {
    pub fn name(self) -> &'static str {
        match self {
            SearchModel::Rdgcn => "rdgcn",
            SearchModel::Dgmc => "dgmc",
            SearchModel::GcnAlign => "gcn-align",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        [SearchModel::Rdgcn, SearchModel::Dgmc, SearchModel::GcnAlign]
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::invalid(format!("no search space for model `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub model: SearchModel,
    pub params: Vec<ParamSpec>,
}

fn common() -> Vec<ParamSpec> {
    vec![
        ParamSpec::strs("optimizer", &["adam"]),
        ParamSpec::categorical(
            "similarity",
            SimilarityKind::ALL.iter().map(|k| ParamValue::str(k.name())).collect(),
        ),
    ]
}

fn powers_of_two(low: usize, high: usize) -> Vec<i64> {
    std::iter::successors(Some(low), |d| Some(d * 2))
        .take_while(|&d| d <= high)
        .map(|d| d as i64)
        .collect()
}

/// `{0, step, 2 step, ..., n step}` without accumulated rounding.
fn grid(step_hundredths: u32, n: u32) -> Vec<f64> {
    (0..=n).map(|i| f64::from(i * step_hundredths) / 100.0).collect()
}

impl SearchSpace {
    /// Space for `model` over initial features of width `embedding_dim`.
    pub fn for_model(model: SearchModel, embedding_dim: usize) -> Self {
        match model {
            SearchModel::Rdgcn => Self::rdgcn(),
            SearchModel::Dgmc => Self::dgmc(),
            SearchModel::GcnAlign => Self::gcn_align(embedding_dim),
        }
    }

    pub fn rdgcn() -> Self {
        let mut params = common();
        params.extend([
            ParamSpec::strs("normalization", &["always-l2", "initial-l2", "never"]),
            ParamSpec::int_range("gcn_layers", 0, 3),
            ParamSpec::int_range("interaction_layers", 0, 3),
            ParamSpec::floats("interaction_weight", (1..=6).map(|i| f64::from(i) / 10.0)),
            ParamSpec::bools("trainable_embeddings"),
            ParamSpec::bools("hard_negatives"),
            ParamSpec::log_uniform("learning_rate", 1e-4, 1e-1),
        ]);
        Self {
            model: SearchModel::Rdgcn,
            params,
        }
    }

    pub fn dgmc() -> Self {
        let mut params = common();
        for psi in ["psi1", "psi2"] {
            params.extend([
                ParamSpec::ints(&format!("{psi}_dim"), powers_of_two(32, 1024)),
                ParamSpec::ints(&format!("{psi}_layers"), 1..=5),
                ParamSpec::bools(&format!("{psi}_batch_norm")),
                ParamSpec::bools(&format!("{psi}_concat")),
            ]);
        }
        params.extend([
            ParamSpec::floats("psi1_dropout", grid(5, 19)),
            ParamSpec::floats("psi2_dropout", [0.0]),
            ParamSpec::categorical("trainable_embeddings", vec![ParamValue::Bool(false)]),
            ParamSpec::strs("normalization", &["never", "always-l1", "always-l2"]),
            ParamSpec::log_uniform("learning_rate", 1e-3, 1e-1),
        ]);
        Self {
            model: SearchModel::Dgmc,
            params,
        }
    }

    /// Output widths double from 32 up to the embedding width, which is
    /// always included.
    pub fn gcn_align(embedding_dim: usize) -> Self {
        let mut dims = powers_of_two(32, embedding_dim);
        if dims.last() != Some(&(embedding_dim as i64)) {
            dims.push(embedding_dim as i64);
        }
        let mut params = common();
        params.extend([
            ParamSpec::ints("output_dim", dims),
            ParamSpec::ints("gcn_layers", 1..=3),
            ParamSpec::bools("batch_norm"),
            ParamSpec::bools("concat"),
            ParamSpec::bools("projection"),
            ParamSpec::floats("dropout", grid(10, 5)),
            ParamSpec::bools("trainable_embeddings"),
            ParamSpec::strs("normalization", &["never", "always-l1", "always-l2"]),
            ParamSpec::bools("share_horizontal"),
            ParamSpec::log_uniform("learning_rate", 1e-3, 1e-1),
        ]);
        Self {
            model: SearchModel::GcnAlign,
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.params {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::invalid(format!("parameter `{}` listed twice", p.name)));
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// Draws one configuration: categorical and integer parameters uniformly,
/// reals log-uniformly. Parameters are drawn in listing order from a
/// generator seeded with `seed`.
pub fn sample_config(space: &SearchSpace, seed: u64) -> Result<Configuration> {
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(space
        .params
        .iter()
        .map(|p| (p.name.clone(), p.sample(&mut rng)))
        .collect())
}

fn lookup<'a>(config: &'a Configuration, name: &str) -> Result<&'a ParamValue> {
    config.get(name).ok_or_else(|| Error::UnknownParameter(name.to_owned()))
}

fn get_bool(config: &Configuration, name: &str) -> Result<bool> {
    match lookup(config, name)? {
        ParamValue::Bool(b) => Ok(*b),
        v => Err(Error::invalid(format!("`{name}` must be a boolean, got {v}"))),
    }
}

fn get_usize(config: &Configuration, name: &str) -> Result<usize> {
    match lookup(config, name)? {
        ParamValue::Int(i) if *i >= 0 => Ok(*i as usize),
        v => Err(Error::invalid(format!(
            "`{name}` must be a non-negative integer, got {v}"
        ))),
    }
}

fn get_f64(config: &Configuration, name: &str) -> Result<f64> {
    match lookup(config, name)? {
        ParamValue::Float(x) => Ok(*x),
        ParamValue::Int(i) => Ok(*i as f64),
        v => Err(Error::invalid(format!("`{name}` must be a number, got {v}"))),
    }
}

fn get_parsed<T: std::str::FromStr<Err = Error>>(config: &Configuration, name: &str) -> Result<T> {
    match lookup(config, name)? {
        ParamValue::Str(s) => s.parse(),
        v => Err(Error::invalid(format!("`{name}` must be a string, got {v}"))),
    }
}

/// Builds the training configuration of one trial. Settings the space does
/// not cover (epochs, patience, margin, negatives) come from `base`.
pub fn config_from_sample(
    model: SearchModel,
    config: &Configuration,
    embedding_dim: usize,
    base: &TrainConfig,
) -> Result<TrainConfig> {
    if let Some(unknown) = config
        .keys()
        .find(|k| SearchSpace::for_model(model, embedding_dim).get(k).is_none())
    {
        return Err(Error::UnknownParameter(unknown.clone()));
    }
    let optimizer: String = match lookup(config, "optimizer")? {
        ParamValue::Str(s) => s.clone(),
        v => v.to_string(),
    };
    if optimizer != "adam" {
        return Err(Error::invalid(format!("unsupported optimizer `{optimizer}`")));
    }
    let similarity: SimilarityKind = get_parsed(config, "similarity")?;
    let normalization: NormalizationMode = get_parsed(config, "normalization")?;
    let mut train = base.clone();
    train.similarity = similarity;
    train.learning_rate = get_f64(config, "learning_rate")?;
    train.model = match model {
        SearchModel::Rdgcn => {
            let mut c = RdgcnConfig::new(embedding_dim);
            c.normalization = normalization;
            c.gcn_layers = get_usize(config, "gcn_layers")?;
            c.interaction_layers = get_usize(config, "interaction_layers")?;
            c.betas = vec![get_f64(config, "interaction_weight")?];
            c.trainable_embeddings = get_bool(config, "trainable_embeddings")?;
            train.hard_negatives = get_bool(config, "hard_negatives")?;
            c.validate()?;
            ModelConfig::Rdgcn(c)
        }
        SearchModel::Dgmc => {
            let mut c = DgmcConfig::new(embedding_dim);
            c.normalization = normalization;
            c.similarity = similarity;
            for (psi, name) in [(&mut c.psi1, "psi1"), (&mut c.psi2, "psi2")] {
                psi.dim = get_usize(config, &format!("{name}_dim"))?;
                psi.layers = get_usize(config, &format!("{name}_layers"))?;
                psi.batch_norm = get_bool(config, &format!("{name}_batch_norm"))?;
                psi.concat = get_bool(config, &format!("{name}_concat"))?;
            }
            c.psi1_dropout = get_f64(config, "psi1_dropout")?;
            if get_f64(config, "psi2_dropout")? != 0.0 {
                return Err(Error::invalid("psi2 dropout is fixed at 0"));
            }
            if get_bool(config, "trainable_embeddings")? {
                return Err(Error::invalid("DGMC embeddings are not trainable"));
            }
            c.validate()?;
            ModelConfig::Dgmc(c)
        }
        SearchModel::GcnAlign => {
            let mut c = GcnAlignConfig::new(embedding_dim);
            c.output_dim = get_usize(config, "output_dim")?;
            c.layers = get_usize(config, "gcn_layers")?;
            c.batch_norm = get_bool(config, "batch_norm")?;
            c.concat = get_bool(config, "concat")?;
            c.projection = get_bool(config, "projection")?;
            c.dropout = get_f64(config, "dropout")?;
            c.trainable_embeddings = get_bool(config, "trainable_embeddings")?;
            c.normalization = normalization;
            c.share_horizontal = get_bool(config, "share_horizontal")?;
            c.validate()?;
            ModelConfig::GcnAlign(c)
        }
    };
    train.validate()?;
    Ok(train)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelConfig;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn names(space: &SearchSpace) -> Vec<&str> {
        space.params.iter().map(|p| p.name.as_str()).collect()
    }

    #[test]
    fn spaces_cover_the_table_rows() {
        assert_eq!(
            names(&SearchSpace::rdgcn()),
            [
                "optimizer",
                "similarity",
                "normalization",
                "gcn_layers",
                "interaction_layers",
                "interaction_weight",
                "trainable_embeddings",
                "hard_negatives",
                "learning_rate"
            ]
        );
        assert_eq!(SearchSpace::dgmc().params.len(), 2 + 8 + 5);
        assert_eq!(SearchSpace::gcn_align(300).params.len(), 2 + 10);
        let Some(ParamKind::Categorical { values }) =
            SearchSpace::gcn_align(300).get("output_dim").map(|p| p.kind.clone())
        else {
            panic!("output_dim must be categorical")
        };
        let dims: Vec<_> = values.iter().map(ToString::to_string).collect();
        assert_eq!(dims, ["32", "64", "128", "256", "300"]);
        for m in [SearchModel::Rdgcn, SearchModel::Dgmc, SearchModel::GcnAlign] {
            SearchSpace::for_model(m, 64).validate().unwrap();
        }
    }

    #[test]
    fn table_ranges() {
        let rd = SearchSpace::rdgcn();
        assert_eq!(
            rd.get("learning_rate").unwrap().kind,
            ParamKind::LogUniform { low: 1e-4, high: 1e-1 }
        );
        let weights = ParamSpec::floats("w", (1..=6).map(|i| f64::from(i) / 10.0));
        assert_eq!(rd.get("interaction_weight").unwrap().kind, weights.kind);
        assert!(rd.get("interaction_weight").unwrap().contains(&ParamValue::Float(0.3)));
        let dg = SearchSpace::dgmc();
        let ParamKind::Categorical { values } = &dg.get("psi1_dropout").unwrap().kind else {
            panic!()
        };
        assert_eq!(values.len(), 20);
        assert_eq!(values[19], ParamValue::Float(0.95));
        assert_eq!(
            dg.get("psi2_dim").unwrap().kind,
            ParamKind::Categorical {
                values: [32, 64, 128, 256, 512, 1024].map(ParamValue::Int).to_vec()
            }
        );
    }

    #[test]
    fn invalid_spaces_rejected() {
        let mut s = SearchSpace::rdgcn();
        s.params.push(ParamSpec::log_uniform("x", 1.0, 1.0));
        assert!(sample_config(&s, 0).is_err());
        let mut s = SearchSpace::rdgcn();
        s.params.push(ParamSpec::categorical("y", vec![]));
        assert!(s.validate().is_err());
        let mut s = SearchSpace::rdgcn();
        s.params.push(ParamSpec::int_range("z", 3, 2));
        assert!(s.validate().is_err());
        let mut s = SearchSpace::rdgcn();
        s.params.push(s.params[0].clone());
        assert!(s.validate().is_err());
    }

    #[test]
    fn same_seed_same_configuration() {
        let s = SearchSpace::dgmc();
        assert_eq!(sample_config(&s, 7).unwrap(), sample_config(&s, 7).unwrap());
    }

    #[test]
    fn samples_build_valid_configs() {
        let base = TrainConfig::new(ModelConfig::ZeroShot);
        for m in [SearchModel::Rdgcn, SearchModel::Dgmc, SearchModel::GcnAlign] {
            let space = SearchSpace::for_model(m, 64);
            for seed in 0..50 {
                let c = sample_config(&space, seed).unwrap();
                let t = config_from_sample(m, &c, 64, &base).unwrap();
                assert_eq!(t.model.name(), m.name());
            }
        }
    }

    #[test]
    fn unknown_parameters_rejected() {
        let base = TrainConfig::new(ModelConfig::ZeroShot);
        let mut c = sample_config(&SearchSpace::rdgcn(), 0).unwrap();
        c.insert("colour".into(), ParamValue::str("red"));
        assert!(matches!(
            config_from_sample(SearchModel::Rdgcn, &c, 8, &base),
            Err(Error::UnknownParameter(_))
        ));
        let mut c = sample_config(&SearchSpace::rdgcn(), 0).unwrap();
        c.remove("gcn_layers");
        assert!(config_from_sample(SearchModel::Rdgcn, &c, 8, &base).is_err());
    }

    #[test]
    fn values_round_trip_through_json() {
        let c = sample_config(&SearchSpace::gcn_align(64), 3).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        let back: Configuration = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let whole: ParamValue = serde_json::from_str("1.0").unwrap();
        assert_eq!(whole, ParamValue::Float(1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn draws_stay_in_their_sets(seed in 0u64..u64::MAX) {
            for space in [SearchSpace::rdgcn(), SearchSpace::dgmc(), SearchSpace::gcn_align(96)] {
                let c = sample_config(&space, seed).unwrap();
                prop_assert!(c.len() == space.params.len());
                for p in &space.params {
                    prop_assert!(p.contains(&c[&p.name]), "{} = {}", p.name, c[&p.name]);
                }
            }
        }
    }
}
