pub mod dataset;
pub mod evaluation;
pub mod ingest;
pub mod neural;
pub mod preprocess;
pub mod recording;
pub mod selftest;
pub mod tensorfile;
pub mod training;
pub mod wavelet;
