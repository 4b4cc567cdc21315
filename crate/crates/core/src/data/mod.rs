//! Feature schema, encoding, splitting and synthetic data.

mod ingest;
mod manifest;
mod schema;
mod split;
mod synthetic;

pub use ingest::{
    build_schema_and_encode, encode_with_schema, format_column_specs, parse_column_specs, ColumnKind,
    ColumnSpec, NumericPrep, RawTable,
};
pub use manifest::{
    bayes_auc, best_marginal_auc, dataset_manifest, export_columns, write_delimited, Manifest,
};
pub use schema::{
    Dataset, EncodedInstance, FeatureSchema, FeatureValue, Field, FieldKind, NumericTransform, Split,
    Vocabulary,
};
pub use split::{split_dataset, split_indices};
pub use synthetic::{gen_synthetic, gen_synthetic_with_latents, Latents, SyntheticConfig};
