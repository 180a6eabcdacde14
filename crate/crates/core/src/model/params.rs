use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Named tensors in a fixed order, addressable by name.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn zeros(shapes: &[(String, Vec<usize>)]) -> Self {
        let tensors = shapes
            .iter()
            .map(|(name, shape)| Tensor {
                name: name.clone(),
                shape: shape.clone(),
                data: vec![T::zero(); shape.iter().product()],
            })
            .collect();
        Self::from_tensors(tensors).expect("shape list has unique names")
    }

    pub fn from_tensors(tensors: Vec<Tensor<T>>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, t) in tensors.iter().enumerate() {
            if t.data.len() != t.shape.iter().product::<usize>() {
                return Err(Error::Validation(format!("tensor {} does not match its shape", t.name)));
            }
            if index.insert(t.name.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate tensor {}", t.name)));
            }
        }
        Ok(Self { tensors, index })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![T::zero(); t.data.len()],
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> &[T] {
        &self.tensors[self.slot(name)].data
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [T] {
        let i = self.slot(name);
        &mut self.tensors[i].data
    }

    /// Mutable views of two distinct tensors.
    pub fn pair_mut(&mut self, a: &str, b: &str) -> (&mut [T], &mut [T]) {
        let (i, j) = (self.slot(a), self.slot(b));
        assert_ne!(i, j, "pair_mut needs two different tensors");
        if i < j {
            let (lo, hi) = self.tensors.split_at_mut(j);
            (&mut lo[i].data, &mut hi[0].data)
        } else {
            let (lo, hi) = self.tensors.split_at_mut(i);
            (&mut hi[0].data, &mut lo[j].data)
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    fn slot(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name}"))
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// `self += other`, tensor by tensor in storage order.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Euclidean norm over every entry, accumulated in `f64`.
    pub fn norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|x| x.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}
