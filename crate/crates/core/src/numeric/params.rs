use crate::error::{Error, Result};

/// Handle to one parameter array inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamInfo {
    pub name: String,
    /// `(rows, cols)`; vectors are `(len, 1)`.
    pub shape: (usize, usize),
    /// Included in the L2 penalty.
    pub regularized: bool,
}

impl ParamInfo {
    pub fn len(&self) -> usize {
        self.shape.0 * self.shape.1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All trainable arrays of a model, each with a gradient buffer of identical
/// shape and the Adam moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    info: Vec<ParamInfo>,
    values: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step: u64,
}

/// Read-only view over parameter values.
#[derive(Clone, Copy)]
pub struct Values<'a>(&'a [Vec<f64>]);

impl<'a> Values<'a> {
    #[inline]
    pub fn get(&self, id: ParamId) -> &'a [f64] {
        &self.0[id.0]
    }
}

/// Mutable view over gradient buffers.
pub struct Grads<'a>(&'a mut [Vec<f64>]);

impl Grads<'_> {
    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.0[id.0]
    }

    pub fn accumulate(&mut self, id: ParamId, delta: &[f64]) {
        for (g, d) in self.0[id.0].iter_mut().zip(delta) {
            *g += d;
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            info: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step: 0,
        }
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, shape: (usize, usize), init: Vec<f64>) -> ParamId {
        let name = name.into();
        assert_eq!(init.len(), shape.0 * shape.1, "parameter {name} init length");
        assert!(
            self.info.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let n = init.len();
        self.info.push(ParamInfo {
            name,
            shape,
            regularized: true,
        });
        self.values.push(init);
        self.grads.push(vec![0.0; n]);
        self.first_moment.push(vec![0.0; n]);
        self.second_moment.push(vec![0.0; n]);
        ParamId(self.info.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.info.len()
    }

    pub fn is_empty(&self) -> bool {
        self.info.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.info.len()).map(ParamId)
    }

    pub fn info(&self, id: ParamId) -> &ParamInfo {
        &self.info[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.info.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn values(&self) -> Values<'_> {
        Values(&self.values)
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    /// Borrow values immutably and gradients mutably at the same time.
    pub fn split(&mut self) -> (Values<'_>, Grads<'_>) {
        (Values(&self.values), Grads(&mut self.grads))
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Sum of squares over every trainable scalar.
    pub fn squared_norm(&self) -> f64 {
        self.values.iter().flatten().map(|v| v * v).sum()
    }

    /// Leaves `id` out of [`ParamStore::regularized_norm`].
    pub fn exempt_from_l2(&mut self, id: ParamId) {
        self.info[id.0].regularized = false;
    }

    /// Sum of squares over the parameters subject to the L2 penalty.
    pub fn regularized_norm(&self) -> f64 {
        self.info
            .iter()
            .zip(&self.values)
            .filter(|(i, _)| i.regularized)
            .flat_map(|(_, v)| v)
            .map(|v| v * v)
            .sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Mutable access used by the optimizer: values, grads, moments and the
    /// step counter.
    pub(crate) fn optimizer_view(
        &mut self,
    ) -> (
        &mut [Vec<f64>],
        &[Vec<f64>],
        &mut [Vec<f64>],
        &mut [Vec<f64>],
        &mut u64,
    ) {
        (
            &mut self.values,
            &self.grads,
            &mut self.first_moment,
            &mut self.second_moment,
            &mut self.step,
        )
    }

    /// Snapshot of parameter values only.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.values.clone()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f64>]) -> Result<()> {
        if snapshot.len() != self.values.len()
            || snapshot.iter().zip(&self.values).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::shape("ParamStore::restore", "snapshot layout differs"));
        }
        for (dst, src) in self.values.iter_mut().zip(snapshot) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
            && self.grads.iter().flatten().all(|v| v.is_finite())
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_param_has_matching_grad() {
        let mut s = ParamStore::new();
        let a = s.add("a", (2, 3), vec![1.0; 6]);
        let b = s.add("b", (4, 1), vec![0.0; 4]);
        assert_eq!(s.grad(a).len(), 6);
        assert_eq!(s.grad(b).len(), 4);
        assert_eq!(s.scalar_count(), 10);
        let (vals, mut grads) = s.split();
        grads.accumulate(a, vals.get(a));
        assert_eq!(s.grad(a), &[1.0; 6]);
        s.zero_grads();
        assert!(s.grad(a).iter().all(|&g| g == 0.0));
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_panic() {
        let mut s = ParamStore::new();
        s.add("w", (1, 1), vec![0.0]);
        s.add("w", (1, 1), vec![0.0]);
    }

    #[test]
    fn restore_checks_layout() {
        let mut s = ParamStore::new();
        s.add("w", (1, 2), vec![1.0, 2.0]);
        assert!(s.restore(&[vec![1.0]]).is_err());
        s.restore(&[vec![5.0, 6.0]]).unwrap();
        assert_eq!(s.value(ParamId(0)), &[5.0, 6.0]);
    }
}
