pub mod ladder;
pub mod snail;
pub mod cme;
pub mod optimize;
pub mod device;
pub mod netgraph;
pub mod cli;
