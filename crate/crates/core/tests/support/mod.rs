pub mod invariants;
pub mod oracles;
