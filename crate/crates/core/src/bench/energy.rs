use crate::isa::InstrClass;
use crate::sim::Metrics;

/// Synthetic energy weights: units per retired instruction of each class,
/// plus an idle charge per cycle for each of the two issue units.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub weights: [f64; InstrClass::ALL.len()],
    pub idle: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        let mut m = EnergyModel { weights: [0.0; InstrClass::ALL.len()], idle: 0.2 };
        for c in InstrClass::ALL {
            m.weights[c.index()] = match c {
                InstrClass::IntAlu => 1.0,
                InstrClass::IntMul => 1.5,
                InstrClass::IntLoad | InstrClass::IntStore => 2.5,
                InstrClass::Branch | InstrClass::Csr | InstrClass::Frep => 1.0,
                InstrClass::FpCompute | InstrClass::FpMove => 2.0,
                InstrClass::FpLoad | InstrClass::FpStore => 2.5,
            };
        }
        m
    }
}

impl EnergyModel {
    pub fn zero() -> Self {
        EnergyModel { weights: [0.0; InstrClass::ALL.len()], idle: 0.0 }
    }

    pub fn weight(&self, c: InstrClass) -> f64 {
        self.weights[c.index()]
    }

    pub fn set(&mut self, c: InstrClass, w: f64) {
        self.weights[c.index()] = w;
    }

    /// Sets all four load/store classes at once.
    pub fn set_load_store(&mut self, w: f64) {
        for c in [InstrClass::IntLoad, InstrClass::IntStore, InstrClass::FpLoad, InstrClass::FpStore] {
            self.set(c, w);
        }
    }

    pub fn is_valid(&self) -> bool {
        self.idle >= 0.0 && self.weights.iter().all(|w| *w >= 0.0)
    }
}

/// Sum of class counts times weights, plus idle weight for both units on
/// every cycle.
pub fn energy(m: &Metrics, em: &EnergyModel) -> f64 {
    let work: f64 = m.histogram.iter().map(|(c, n)| n as f64 * em.weight(c)).sum();
    work + 2.0 * m.cycles as f64 * em.idle
}
