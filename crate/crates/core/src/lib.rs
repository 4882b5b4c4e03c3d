pub mod channel;
pub mod harness;
pub mod linalg;
pub mod nash;
pub mod pareto;
pub mod waterfill;
