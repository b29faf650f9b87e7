//! Shared inputs for the benchmarks.

use std::path::{Path, PathBuf};

use healthy_choice::{load_catalog, load_scenarios, ProductCatalog, ScenarioSet};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
}

pub fn fixtures() -> (ProductCatalog, ScenarioSet) {
    let catalog =
        load_catalog(&std::fs::read(fixture("catalog.json")).expect("catalog fixture")).expect("valid catalog");
    let scenarios = load_scenarios(
        &std::fs::read(fixture("scenarios.json")).expect("scenario fixture"),
        &catalog,
    )
    .expect("valid scenarios");
    (catalog, scenarios)
}
