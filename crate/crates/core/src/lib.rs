//! Mini-batch contrastive learning over directly optimized unit-norm
//! embeddings: batch losses and their gradients, the simplex ETF and
//! cross-polytope optima, projected (ordered) SGD variants, spectral
//! batch selection and a four-point toy model.

pub mod batching;
pub mod combinatorics;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod loss;
pub mod optim;
pub mod rng;
pub mod toy;
pub mod verify;

pub use embedding::{Batch, BatchCollection, CollectionKind, EmbeddingPair};
pub use error::{Error, Result};
