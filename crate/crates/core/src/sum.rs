/// A running sum. Implementations are pure functions of the sequence of
/// addends, so a fixed addition order gives bit-identical results.
pub(crate) trait Accumulate: Copy + Default + Send + Sync {
    fn add(&mut self, x: f64);
    fn value(&self) -> f64;
}

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Compensated {
    sum: f64,
    c: f64,
}

impl Accumulate for Compensated {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Plain(f64);

impl Accumulate for Plain {
    #[inline]
    fn add(&mut self, x: f64) {
        self.0 += x;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.0
    }
}
