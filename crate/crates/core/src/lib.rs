pub mod calendar;
pub mod cli;
pub mod evalkit;
pub mod forecasters;
pub mod ingest;
pub mod neural;
pub mod optim;
pub mod projection;
pub mod rng;
pub mod sarima;
pub mod series;
pub mod trials;
