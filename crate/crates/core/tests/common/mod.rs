#![allow(dead_code)]

pub mod oracle;
pub mod props;

use std::path::PathBuf;

use rfd_core::dataset::{load_csv, Dataset, LabelColumn};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/uci")
}

pub fn uci(name: &str) -> Dataset {
    let path = data_dir().join(format!("{name}.csv"));
    load_csv(&path, true, LabelColumn::Last).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub type Check = std::result::Result<(), String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}
