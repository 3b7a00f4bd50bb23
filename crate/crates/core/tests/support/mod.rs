pub mod bundles;
pub mod gen;
pub mod oracles;
