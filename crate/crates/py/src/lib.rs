//! Python bindings for the concurrent Braun heap, its persistent counterpart,
//! the locked array heap and the benchmark runner.

use pyo3::prelude::*;

pyo3::create_exception!(braun_heap, ReleasedError, pyo3::exceptions::PyRuntimeError);

#[pymodule(name = "braun_heap")]
mod braun_heap_module {
    use std::collections::HashMap;

    use braun_heap::bench::{run_task, BenchConfig, Structure, Task};
    use braun_heap::{CHeap, LockedArrayHeap as CoreArrayHeap, PHeap};
    use pyo3::exceptions::PyValueError;
    use pyo3::prelude::*;

    #[pymodule_export]
    use super::ReleasedError;

    /// Thread-safe min-heap with O(1) snapshots.
    #[pyclass(frozen)]
    pub struct BraunHeap {
        inner: CHeap<i64>,
    }

    impl BraunHeap {
        fn live(&self) -> PyResult<&CHeap<i64>> {
            if self.inner.is_released() {
                return Err(ReleasedError::new_err("heap handle has already been released"));
            }
            Ok(&self.inner)
        }
    }

    #[pymethods]
    impl BraunHeap {
        #[new]
        #[pyo3(signature = (values=None))]
        fn new(values: Option<Vec<i64>>) -> Self {
            let inner = CHeap::with_stats();
            values.into_iter().flatten().for_each(|x| inner.insert(x));
            BraunHeap { inner }
        }

        fn insert(&self, x: i64) -> PyResult<()> {
            self.live()?.insert(x);
            Ok(())
        }

        fn get_min(&self) -> PyResult<Option<i64>> {
            Ok(self.live()?.get_min())
        }

        fn remove_min(&self) -> PyResult<Option<i64>> {
            Ok(self.live()?.remove_min())
        }

        /// Independent handle sharing this heap's nodes until either side writes.
        fn snapshot(&self) -> PyResult<BraunHeap> {
            Ok(BraunHeap {
                inner: self.live()?.snapshot(),
            })
        }

        /// Gives up the handle. A second call raises ReleasedError.
        fn release(&self) -> PyResult<()> {
            self.inner
                .release()
                .map_err(|e| ReleasedError::new_err(e.to_string()))
        }

        #[getter]
        fn released(&self) -> bool {
            self.inner.is_released()
        }

        fn sum(&self) -> PyResult<i128> {
            Ok(self.live()?.sum())
        }

        fn to_sorted_list(&self) -> PyResult<Vec<i64>> {
            Ok(self.live()?.to_sorted_vec())
        }

        /// Raises ValueError describing the first broken invariant.
        fn validate(&self) -> PyResult<()> {
            self.live()?
                .validate()
                .map_err(|v| PyValueError::new_err(v.to_string()))
        }

        fn alloc_stats(&self) -> HashMap<&'static str, u64> {
            let s = self.inner.alloc_stats().unwrap_or_default();
            HashMap::from([
                ("nodes_allocated", s.nodes_allocated),
                ("nodes_peeled", s.nodes_peeled),
                ("snapshots", s.snapshots),
            ])
        }

        fn __len__(&self) -> PyResult<usize> {
            Ok(self.live()?.len())
        }
    }

    /// Immutable Braun heap; updates return new heaps.
    #[pyclass(frozen)]
    pub struct PersistentHeap {
        inner: PHeap<i64>,
    }

    #[pymethods]
    impl PersistentHeap {
        #[new]
        #[pyo3(signature = (values=None))]
        fn new(values: Option<Vec<i64>>) -> Self {
            PersistentHeap {
                inner: values.into_iter().flatten().collect(),
            }
        }

        fn insert(&self, x: i64) -> PersistentHeap {
            PersistentHeap {
                inner: self.inner.insert(x),
            }
        }

        fn get_min(&self) -> Option<i64> {
            self.inner.get_min()
        }

        /// Returns `(rest, min)`.
        fn remove_min(&self) -> (PersistentHeap, Option<i64>) {
            let (inner, v) = self.inner.remove_min();
            (PersistentHeap { inner }, v)
        }

        fn to_sorted_list(&self) -> Vec<i64> {
            self.inner.to_sorted_vec()
        }

        fn validate(&self) -> PyResult<()> {
            self.inner
                .validate()
                .map_err(|v| PyValueError::new_err(v.to_string()))
        }

        fn depth(&self) -> usize {
            self.inner.depth()
        }

        fn __len__(&self) -> usize {
            self.inner.size()
        }

        fn __str__(&self) -> String {
            self.inner.root().to_string()
        }
    }

    /// Array-backed binary heap behind a single mutex.
    #[pyclass(frozen)]
    pub struct LockedArrayHeap {
        inner: CoreArrayHeap<i64>,
    }

    #[pymethods]
    impl LockedArrayHeap {
        #[new]
        #[pyo3(signature = (values=None))]
        fn new(values: Option<Vec<i64>>) -> Self {
            let inner = CoreArrayHeap::new();
            values.into_iter().flatten().for_each(|x| inner.insert(x));
            LockedArrayHeap { inner }
        }

        fn insert(&self, x: i64) {
            self.inner.insert(x);
        }

        fn get_min(&self) -> Option<i64> {
            self.inner.get_min()
        }

        fn remove_min(&self) -> Option<i64> {
            self.inner.remove_min()
        }

        /// Full copy of the backing array.
        fn snapshot(&self) -> LockedArrayHeap {
            LockedArrayHeap {
                inner: self.inner.snapshot(),
            }
        }

        fn sum(&self) -> i128 {
            self.inner.sum()
        }

        fn to_sorted_list(&self) -> Vec<i64> {
            self.inner.to_sorted_vec()
        }

        fn __len__(&self) -> usize {
            self.inner.len()
        }
    }

    /// Runs one benchmark configuration and returns its timings.
    #[pyfunction]
    #[pyo3(signature = (task, structure, threads=1, init_size=1 << 20, ops=1344, warmup=10, runs=40, seed=42))]
    #[allow(clippy::too_many_arguments)]
    fn run_benchmark(
        py: Python<'_>,
        task: &str,
        structure: &str,
        threads: usize,
        init_size: usize,
        ops: usize,
        warmup: usize,
        runs: usize,
        seed: u64,
    ) -> PyResult<HashMap<&'static str, Py<PyAny>>> {
        let bad = |e: braun_heap::bench::ConfigError| PyValueError::new_err(e.to_string());
        let cfg = BenchConfig {
            task: task.parse::<Task>().map_err(bad)?,
            structure: structure.parse::<Structure>().map_err(bad)?,
            threads,
            init_size,
            total_ops: ops,
            warmup_runs: warmup,
            measured_runs: runs,
            seed,
        };
        let res = py.detach(|| run_task(&cfg)).map_err(bad)?;
        Ok(HashMap::from([
            ("mean_ms", res.mean_ms.into_pyobject(py)?.into_any().unbind()),
            ("std_ms", res.std_ms.into_pyobject(py)?.into_any().unbind()),
            ("per_run_ms", res.per_run_ms.into_pyobject(py)?.into_any().unbind()),
            (
                "ops_per_thread",
                res.ops_per_thread.into_pyobject(py)?.into_any().unbind(),
            ),
            ("final_size", res.final_size.into_pyobject(py)?.into_any().unbind()),
        ]))
    }
}
