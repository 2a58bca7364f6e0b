use crate::error::{Error, Result};

/// Which part of the model a tensor belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Backbone,
    Film,
}

impl ParamGroup {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamGroup::Backbone => "backbone",
            ParamGroup::Film => "film",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All model parameters in one flat buffer, addressed through named tensors.
/// The flat order is the checkpoint order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    specs: Vec<TensorSpec>,
    values: Vec<f64>,
}

impl ParameterSet {
    pub(crate) fn from_specs(specs: Vec<(String, ParamGroup, Vec<usize>)>) -> Self {
        let mut offset = 0;
        let specs: Vec<TensorSpec> = specs
            .into_iter()
            .map(|(name, group, shape)| {
                let spec = TensorSpec {
                    name,
                    group,
                    shape,
                    offset,
                };
                offset += spec.len();
                spec
            })
            .collect();
        ParameterSet {
            specs,
            values: vec![0.0; offset],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.values.len(),
                values.len()
            )));
        }
        self.values = values;
        Ok(())
    }

    pub(crate) fn slot(&self, index: usize) -> &[f64] {
        &self.values[self.specs[index].range()]
    }

    pub(crate) fn index_of(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.index_of(name).map(|i| self.slot(i))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let i = self.index_of(name)?;
        let r = self.specs[i].range();
        Some(&mut self.values[r])
    }

    pub fn count(&self, group: ParamGroup) -> usize {
        self.specs.iter().filter(|s| s.group == group).map(|s| s.len()).sum()
    }

    /// Per-scalar flag: true where the tensor's group is in `groups`.
    pub fn mask(&self, groups: &[ParamGroup]) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for s in &self.specs {
            if groups.contains(&s.group) {
                mask[s.range()].fill(true);
            }
        }
        mask
    }

    /// Concatenated values of every tensor in `group`, in layout order.
    pub fn group_values(&self, group: ParamGroup) -> Vec<f64> {
        self.specs
            .iter()
            .filter(|s| s.group == group)
            .flat_map(|s| self.values[s.range()].iter().copied())
            .collect()
    }
}
