pub mod bpe;
pub mod classifier;
pub mod conllu;
pub mod corpus;
pub mod error;
pub mod fertility;
pub mod heuristics;
pub mod longctx;
pub mod mcf;
pub mod mix;
pub mod ngram;
pub mod pipeline;
pub mod scalar;

pub use error::{Error, Result};

pub type TextClassifierModel = classifier::TextClassifier<f32>;
pub type LanguageDistribution = mix::Distribution<f64>;
