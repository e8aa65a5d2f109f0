pub mod agents;
pub mod bench;
pub mod orchestrator;
pub mod service;
pub mod sim;
pub mod twin;
