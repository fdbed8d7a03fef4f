pub mod cli;
pub mod gnn;
pub mod grouping;
pub mod models;
pub mod molgraph;
pub mod numerics;
pub mod pooling;
