pub mod evaluate;
pub mod predict;
pub mod preprocess;
pub mod train;

use std::path::Path;

use crate::failure::{io, Failure};

pub fn create_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| io(path, e))
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
