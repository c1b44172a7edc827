use std::collections::BTreeMap;

use crate::error::{shape_err, Error, Result};
use crate::nn::{Module, ParamId};
use crate::scalar::Scalar;

/// Running arithmetic mean of parameter snapshots.
///
/// Uses the incremental update `avg += (x - avg) / k`, applied in snapshot
/// order, so constant snapshots are reproduced exactly.
#[derive(Clone, Debug, Default)]
pub struct SwaState<T> {
    average: BTreeMap<ParamId, Vec<T>>,
    count: usize,
}

impl<T: Scalar> SwaState<T> {
    pub fn new() -> Self {
        Self { average: BTreeMap::new(), count: 0 }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn accumulate<M: Module<T> + ?Sized>(&mut self, model: &M) -> Result<()> {
        let params = model.parameters();
        if self.count > 0 {
            if params.len() != self.average.len() {
                return shape_err("snapshot parameter set differs from earlier snapshots");
            }
            for p in &params {
                match self.average.get(&p.id()) {
                    Some(a) if a.len() == p.data().len() => {}
                    _ => return shape_err(format!("snapshot mismatch for parameter {}", p.name())),
                }
            }
        }
        self.count += 1;
        let k = T::lit(self.count as f64);
        for p in params {
            let avg = self.average.entry(p.id()).or_insert_with(|| vec![T::zero(); p.data().len()]);
            for (a, &x) in avg.iter_mut().zip(p.data()) {
                *a = *a + (x - *a) / k;
            }
        }
        Ok(())
    }

    /// Writes the averaged parameters into `model`.
    pub fn finalize_into<M: Module<T> + ?Sized>(&self, model: &mut M) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("SWA finalize with no snapshots".into()));
        }
        for p in model.parameters_mut() {
            let avg = self
                .average
                .get(&p.id())
                .ok_or_else(|| Error::Shape(format!("no average for parameter {}", p.name())))?;
            if avg.len() != p.data().len() {
                return shape_err(format!("average size mismatch for {}", p.name()));
            }
            p.data_mut().copy_from_slice(avg);
        }
        Ok(())
    }
}
