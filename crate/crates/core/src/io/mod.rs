//! Reading and writing: Wannier90-style overlap and eigenvalue files, the
//! field text format, and run configuration.

mod config;
mod field;
mod mmn;

pub use config::{InputSource, RunConfig, OUT_DIR_ENV};
pub use field::{
    emit_field, read_field, regularity_csv, write_field, FieldData, FieldHeader, FieldKind,
};
pub use mmn::{
    parse_eig, parse_mmn, provider_from_mmn, write_mmn, EigData, MmnBlock, MmnData, MmnProvider,
    Window,
};
