//! Files: the binary stack/mask container, per-band PGM images, run
//! configurations and degradation specs.

pub mod bands;
pub mod config;
pub mod container;
pub mod degradation;

pub use bands::{export_bands, import_bands};
pub use config::RunConfig;
pub use container::{load_container, load_mask, load_stack, save_mask, save_stack, Container, ContainerHeader};
pub use degradation::{format_degradation_spec, parse_degradation_spec};
