//! Sweep harness for worst-case contraction factors of proximal splitting
//! methods: experiment configs, rate sweeps over step-size grids, best-step
//! search, and CSV/SVG emission.

pub mod config;
pub mod emit;
pub mod sweep;
