//! File formats, reports, plots and end-to-end pipelines around
//! `fixpose-core`, shared by the `fixpose` command-line tool and its tests.

pub mod config;
pub mod formats;
pub mod pipeline;
pub mod plot;
pub mod report;
