//! Shared fixtures for the criterion benchmarks.

use climem_core::config::RunConfig;
use climem_core::data::{generate_synthetic, MonthlyDataset};
use climem_core::networks::EmulatorModel;
use climem_core::rng::RngStream;

pub fn toy_fixture() -> (RunConfig, MonthlyDataset, EmulatorModel) {
    let mut cfg = RunConfig::toy();
    cfg.months_total = 120;
    cfg.val_months = 12;
    cfg.train_months = 65;
    let ds = generate_synthetic(&cfg, 42).expect("synthetic dataset");
    let mut rng = RngStream::new(7, 0);
    let model = EmulatorModel::new(&cfg, &mut rng).expect("model");
    (cfg, ds, model)
}
