pub mod classifier;
pub mod corpus;
pub mod embedkit;
pub mod emojikit;
pub mod exec;
pub mod hashseg;
pub mod metrics;
pub mod textprep;
