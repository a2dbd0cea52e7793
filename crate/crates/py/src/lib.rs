//! Python bindings: assemble, transform, simulate, verify and benchmark.

use pyo3::prelude::*;

#[pymodule]
mod copift {
    use std::collections::BTreeMap;

    use pyo3::exceptions::{PyRuntimeError, PyValueError};
    use pyo3::prelude::*;

    use copift_core::bench::{self, EnergyModel, Variant};
    use copift_core::sim::{self, MachineConfig, MachineState, Mode, Termination};
    use copift_core::transform::transform_program;
    use copift_core::{parse_program, print_program};

    fn value_err(e: impl ToString) -> PyErr {
        PyValueError::new_err(e.to_string())
    }

    /// An assembled program.
    #[pyclass(frozen, skip_from_py_object)]
    #[derive(Clone)]
    struct Program {
        inner: copift_core::Program,
    }

    #[pymethods]
    impl Program {
        #[new]
        fn new(source: &str) -> PyResult<Self> {
            parse_program(source).map(|inner| Program { inner }).map_err(value_err)
        }

        fn __len__(&self) -> usize {
            self.inner.len()
        }

        fn __str__(&self) -> String {
            print_program(&self.inner)
        }

        /// Instruction texts in program order.
        #[getter]
        fn instructions(&self) -> Vec<String> {
            self.inner.instructions.iter().map(|i| i.to_string()).collect()
        }

        #[getter]
        fn clobbers(&self) -> Vec<String> {
            self.inner.clobbers.iter().map(|r| r.to_string()).collect()
        }

        /// Number of marked loops.
        #[getter]
        fn loops(&self) -> usize {
            self.inner.loops.len()
        }

        /// `(address, length)` of a data label.
        fn data_region(&self, label: &str) -> Option<(u32, u32)> {
            self.inner.data_region(label)
        }
    }

    /// Machine parameters; keys as in the `key = value` config format.
    #[pyclass(skip_from_py_object)]
    #[derive(Clone)]
    struct Config {
        inner: MachineConfig,
    }

    #[pymethods]
    impl Config {
        #[new]
        #[pyo3(signature = (text = None))]
        fn new(text: Option<&str>) -> PyResult<Self> {
            let inner = match text {
                Some(t) => MachineConfig::parse(t).map_err(value_err)?,
                None => MachineConfig::default(),
            };
            Ok(Config { inner })
        }

        fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
            let mut next = self.inner.clone();
            next.set(key, value).map_err(PyValueError::new_err)?;
            next.validate().map_err(value_err)?;
            self.inner = next;
            Ok(())
        }

        #[staticmethod]
        fn keys() -> Vec<&'static str> {
            MachineConfig::keys().to_vec()
        }

        #[getter]
        fn queue_depth(&self) -> usize {
            self.inner.queue_depth
        }

        #[getter]
        fn frep_buffer_depth(&self) -> usize {
            self.inner.frep_buffer_depth
        }

        #[getter]
        fn cycle_limit(&self) -> u64 {
            self.inner.cycle_limit
        }
    }

    fn config_of(c: Option<&Config>) -> MachineConfig {
        c.map(|c| c.inner.clone()).unwrap_or_default()
    }

    /// Outcome of one simulation.
    #[pyclass(frozen)]
    struct RunResult {
        report: sim::ExecReport,
    }

    #[pymethods]
    impl RunResult {
        /// `halted`, `deadlock`, `trap` or `cycle_limit`.
        #[getter]
        fn termination(&self) -> &'static str {
            match self.report.termination {
                Termination::Halted => "halted",
                Termination::Deadlock(_) => "deadlock",
                Termination::Trap(_) => "trap",
                Termination::CycleLimit => "cycle_limit",
            }
        }

        /// Deadlock or trap diagnostic, empty otherwise.
        #[getter]
        fn detail(&self) -> String {
            match &self.report.termination {
                Termination::Deadlock(d) => d.to_string(),
                Termination::Trap(t) => format!("trap at pc {}: {}", t.pc, t.cause),
                _ => String::new(),
            }
        }

        #[getter]
        fn cycles(&self) -> u64 {
            self.report.metrics.cycles
        }

        #[getter]
        fn retired_int(&self) -> u64 {
            self.report.metrics.retired_int
        }

        #[getter]
        fn retired_fp(&self) -> u64 {
            self.report.metrics.retired_fp
        }

        #[getter]
        fn ipc(&self) -> f64 {
            self.report.metrics.ipc()
        }

        #[getter]
        fn stalls(&self) -> BTreeMap<&'static str, u64> {
            let s = &self.report.metrics.stalls;
            BTreeMap::from([
                ("i2f_full", s.i2f_full),
                ("i2f_empty", s.i2f_empty),
                ("f2i_full", s.f2i_full),
                ("f2i_empty", s.f2i_empty),
                ("offload_backpressure", s.offload_backpressure),
                ("operand", s.operand),
            ])
        }

        fn read_u32(&self, addr: u32) -> PyResult<u32> {
            self.report.final_state.read_u32(addr).ok_or_else(|| value_err("address out of range"))
        }

        fn read_f64(&self, addr: u32) -> PyResult<f64> {
            self.report.final_state.read_f64(addr).ok_or_else(|| value_err("address out of range"))
        }

        fn read_bytes(&self, addr: u32, len: usize) -> PyResult<Vec<u8>> {
            let b = self.report.final_state.read_bytes(addr, len);
            b.map(|b| b.to_vec()).ok_or_else(|| value_err("address out of range"))
        }

        fn __str__(&self) -> String {
            format!("termination = {}\n{}", self.termination(), self.report.metrics)
        }
    }

    /// Runs `program` in `mode` (`seq` or `dual`). With `seed`, the `input`
    /// data region is filled with seeded words first.
    #[pyfunction]
    #[pyo3(signature = (program, mode = "dual", config = None, seed = None))]
    fn simulate(program: &Program, mode: &str, config: Option<&Config>, seed: Option<u64>) -> PyResult<RunResult> {
        let mode = match mode {
            "seq" => Mode::Sequential,
            "dual" => Mode::Dual,
            other => return Err(value_err(format!("unknown mode `{other}`"))),
        };
        let cfg = config_of(config);
        let p = &program.inner;
        let init = match seed {
            Some(seed) => bench::seeded_state(p, &cfg, seed),
            None => MachineState::for_program(p, &cfg),
        }
        .map_err(PyRuntimeError::new_err)?;
        Ok(RunResult { report: sim::run(p, &cfg, init, mode, None) })
    }

    /// Rewrites every marked loop; returns the new program and the report text.
    #[pyfunction]
    #[pyo3(signature = (program, config = None))]
    fn transform(program: &Program, config: Option<&Config>) -> PyResult<(Program, String)> {
        let r = transform_program(&program.inner, &config_of(config)).map_err(value_err)?;
        let text = r.to_string();
        Ok((Program { inner: r.program }, text))
    }

    /// Checks `transformed` (dual) against `original` (sequential) on seeds
    /// `0..seeds`; raises `RuntimeError` naming the first divergence.
    #[pyfunction]
    #[pyo3(signature = (original, transformed, seeds = 100, config = None))]
    fn verify(original: &Program, transformed: &Program, seeds: u64, config: Option<&Config>) -> PyResult<()> {
        let seeds: Vec<u64> = (0..seeds).collect();
        bench::verify_pair(&original.inner, &transformed.inner, &config_of(config), &seeds)
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    #[pyfunction]
    fn kernel_names() -> Vec<&'static str> {
        bench::kernel_names()
    }

    /// Runs kernels (all by default) in every variant; returns the CSV text.
    #[pyfunction]
    #[pyo3(signature = (kernels = None, seeds = 10, config = None))]
    fn bench_csv(py: Python<'_>, kernels: Option<Vec<String>>, seeds: u64, config: Option<&Config>) -> PyResult<String> {
        let ks = match kernels {
            Some(names) => names.iter().map(|n| bench::kernel(n)).collect::<Result<Vec<_>, _>>().map_err(value_err)?,
            None => bench::kernels(),
        };
        let cfg = config_of(config);
        let seeds: Vec<u64> = (0..seeds).collect();
        let rows = py
            .detach(|| bench::run_suite(&ks, &Variant::ALL, &cfg, &seeds, &EnergyModel::default()))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let mut out = Vec::new();
        bench::emit_csv(&rows, &mut out).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        String::from_utf8(out).map_err(value_err)
    }
}
