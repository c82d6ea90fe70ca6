use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::real::Real;

pub type ParamId = usize;

#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Flat, named parameter arrays in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> ParamId {
        let name = name.into();
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "param {name}: shape/data mismatch"
        );
        assert!(!self.by_name.contains_key(&name), "duplicate param {name}");
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, shape, data });
        id
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![T::zero(); n])
    }

    pub fn add_filled(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        value: f64,
    ) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![T::of(value); n])
    }

    /// He-normal initialisation with the given fan-in.
    pub fn add_kaiming<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let std = (2.0 / fan_in.max(1) as f64).sqrt();
        self.add_normal(name, shape, std, rng)
    }

    pub fn add_normal<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        std: f64,
        rng: &mut R,
    ) -> ParamId {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("finite std");
        let data = (0..n).map(|_| T::of(dist.sample(rng))).collect();
        self.add(name, shape, data)
    }

    pub fn get(&self, id: ParamId) -> &[T] {
        &self.params[id].data
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.params[id].data
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn param(&self, id: ParamId) -> &Param<T> {
        &self.params[id]
    }

    /// Convert every array to another float width.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.add(
                p.name.clone(),
                p.shape.clone(),
                p.data.iter().map(|v| U::of(v.as_f64())).collect(),
            );
        }
        out
    }

    pub fn fill_zero(&mut self) {
        for p in &mut self.params {
            p.data.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}

/// Gradient buffers parallel to a [`ParamStore`]. A buffer may be left empty
/// (length 0) for parameters whose gradient is kept in factored form.
#[derive(Clone, Debug)]
pub struct Grads<T> {
    pub bufs: Vec<Vec<T>>,
}

impl<T: Real> Grads<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Grads {
            bufs: store
                .iter()
                .map(|p| vec![T::zero(); p.data.len()])
                .collect(),
        }
    }

    /// Like [`Grads::zeros_like`] but leaves the listed parameters unallocated.
    pub fn zeros_except(store: &ParamStore<T>, skip: &[ParamId]) -> Self {
        Grads {
            bufs: store
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    if skip.contains(&i) {
                        Vec::new()
                    } else {
                        vec![T::zero(); p.data.len()]
                    }
                })
                .collect(),
        }
    }

    pub fn buf(&mut self, id: ParamId) -> &mut [T] {
        &mut self.bufs[id]
    }

    /// Element-wise `self += other`; empty buffers on either side are skipped.
    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.bufs.iter_mut().zip(&other.bufs) {
            if a.is_empty() || b.is_empty() {
                continue;
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn fill_zero(&mut self) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bufs.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn sq_norm(&self) -> f64 {
        self.bufs
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum()
    }
}
