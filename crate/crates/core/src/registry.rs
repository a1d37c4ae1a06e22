//! Named strategies selected at run time: geometries, contour shapes and sheet models.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::basis::{build_disk, build_interval, load_imported, OperatorMatrices};
use crate::error::{Error, Result};
use crate::scanner::{CircleContour, ContourShape, SquareContour};
use crate::toy2x2::{QuarticSheets, SheetModel, SqrtSheets};

pub trait GeometryBuilder: Send + Sync {
    fn name(&self) -> &'static str;
    fn default_truncation(&self) -> usize;
    fn build(&self, size: f64, truncation: usize, import_path: Option<&Path>) -> Result<OperatorMatrices>;
}

pub struct IntervalBuilder;

impl GeometryBuilder for IntervalBuilder {
    fn name(&self) -> &'static str {
        "interval"
    }

    fn default_truncation(&self) -> usize {
        30
    }

    fn build(&self, size: f64, truncation: usize, _: Option<&Path>) -> Result<OperatorMatrices> {
        build_interval(size, truncation)
    }
}

pub struct DiskBuilder;

impl GeometryBuilder for DiskBuilder {
    fn name(&self) -> &'static str {
        "disk"
    }

    fn default_truncation(&self) -> usize {
        60
    }

    fn build(&self, size: f64, truncation: usize, _: Option<&Path>) -> Result<OperatorMatrices> {
        build_disk(size, truncation)
    }
}

/// Matrices read from a file; size and truncation come from the file.
pub struct ImportedBuilder;

impl GeometryBuilder for ImportedBuilder {
    fn name(&self) -> &'static str {
        "imported"
    }

    fn default_truncation(&self) -> usize {
        0
    }

    fn build(&self, _: f64, _: usize, import_path: Option<&Path>) -> Result<OperatorMatrices> {
        let path = import_path.ok_or_else(|| Error::Validation("imported geometry needs an import path".into()))?;
        load_imported(path)
    }
}

pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: BTreeMap<String, Arc<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &str, item: Arc<T>) {
        self.entries.insert(name.to_string(), item);
    }

    pub fn get(&self, name: &str) -> Result<Arc<T>> {
        self.entries.get(name).cloned().ok_or_else(|| Error::UnknownStrategy {
            kind: self.kind,
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }
}

pub fn geometries() -> Registry<dyn GeometryBuilder> {
    let mut r: Registry<dyn GeometryBuilder> = Registry::new("geometry");
    r.register("interval", Arc::new(IntervalBuilder));
    r.register("disk", Arc::new(DiskBuilder));
    r.register("imported", Arc::new(ImportedBuilder));
    r
}

pub fn contour_shapes() -> Registry<dyn ContourShape> {
    let mut r: Registry<dyn ContourShape> = Registry::new("contour shape");
    r.register("square", Arc::new(SquareContour));
    r.register("circle", Arc::new(CircleContour));
    r
}

pub fn sheet_models() -> Registry<dyn SheetModel> {
    let mut r: Registry<dyn SheetModel> = Registry::new("sheet model");
    r.register("sqrt", Arc::new(SqrtSheets));
    r.register("quartic", Arc::new(QuarticSheets));
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookups() {
        assert_eq!(geometries().get("disk").unwrap().default_truncation(), 60);
        assert_eq!(contour_shapes().get("circle").unwrap().name(), "circle");
        let err = sheet_models().get("cubic").err().unwrap();
        assert!(err.to_string().contains("quartic, sqrt"), "{err}");
    }
}
