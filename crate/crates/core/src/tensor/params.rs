use super::array::Array;
use super::graph::{Gradients, Graph, Var};
use crate::error::{Error, Result};

/// Named, ordered collection of trainable arrays. Parameter ids are
/// positions in this set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array) -> usize {
        self.names.push(name.into());
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn get(&self, id: usize) -> &Array {
        &self.values[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Array {
        &mut self.values[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&Array> {
        self.names.iter().position(|n| n == name).map(|i| &self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Places every parameter on the tape as a gradient-receiving leaf.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| g.param(v.clone(), i))
            .collect()
    }

    /// Places every parameter on the tape as a constant.
    pub fn bind_frozen(&self, g: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|v| g.constant(v.clone())).collect()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array::len).sum()
    }
}

/// Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        if self.m.len() != params.len() {
            self.m = (0..params.len()).map(|i| vec![0.0; params.get(i).len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (&id, g) in grads.params() {
            if id >= params.len() || g.len() != params.get(id).len() {
                return Err(Error::shape("adam", format!("gradient for unknown parameter {id}")));
            }
            let (m, v) = (&mut self.m[id], &mut self.v[id]);
            let p = params.get_mut(id).data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                p[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_quadratic() {
        let mut ps = ParamSet::new();
        ps.push("x", Array::vector(vec![3.0, -2.0]).unwrap());
        let mut opt = Adam::new(0.05);
        for _ in 0..2000 {
            let mut g = Graph::new();
            let v = ps.bind(&mut g);
            let sq = g.mul(v[0], v[0]).unwrap();
            let s = g.sum(sq);
            let grads = g.backward(s).unwrap();
            opt.step(&mut ps, &grads).unwrap();
        }
        assert!(ps.get(0).max_abs() < 1e-3);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut ps = ParamSet::new();
        ps.push("x", Array::scalar(1.0).unwrap());
        let mut opt = Adam::new(1e-3);
        let mut g = Graph::new();
        let v = ps.bind(&mut g);
        let y = g.scale(v[0], 4.0);
        let grads = g.backward(y).unwrap();
        opt.step(&mut ps, &grads).unwrap();
        assert!((ps.get(0).data()[0] - (1.0 - 1e-3)).abs() < 1e-9);
    }
}
