use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamRole {
    Weight,
    Bias,
}

/// A named slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub layer: usize,
    pub role: ParamRole,
    /// Logical shape of the parameter, e.g. `[fan_in, fan_out]`.
    pub shape: Vec<usize>,
    pub range: Range<usize>,
}

impl Segment {
    pub fn name(&self) -> String {
        let role = match self.role {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
        };
        format!("layer{}.{role}", self.layer)
    }

    pub fn len(&self) -> usize {
        self.range.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range.is_empty()
    }
}

/// Flat trainable parameters with a matching gradient buffer.
///
/// Segments partition `[0, len)` in order without gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    #[serde(skip)]
    grads: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            grads: Vec::new(),
            segments: Vec::new(),
        }
    }

    /// A single unnamed segment holding `values`; handy for hand-written losses.
    pub fn from_values(values: Vec<f64>) -> Self {
        let mut p = Self::new();
        let n = values.len();
        p.push_segment(0, ParamRole::Weight, vec![n], values);
        p
    }

    pub fn push_segment(
        &mut self,
        layer: usize,
        role: ParamRole,
        shape: Vec<usize>,
        values: Vec<f64>,
    ) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        let start = self.values.len();
        self.values.extend(values);
        self.grads.resize(self.values.len(), 0.0);
        self.segments.push(Segment {
            layer,
            role,
            shape,
            range: start..self.values.len(),
        });
        self.segments.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        if self.grads.len() != self.values.len() {
            self.grads.resize(self.values.len(), 0.0);
        }
        &mut self.grads
    }

    pub fn zero_grads(&mut self) {
        self.grads.clear();
        self.grads.resize(self.values.len(), 0.0);
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_values(&self, idx: usize) -> &[f64] {
        &self.values[self.segments[idx].range.clone()]
    }

    /// Replaces all values, keeping the segment table.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::Shape {
                context: "parameter assignment",
                expected: vec![self.values.len()],
                got: vec![values.len()],
            });
        }
        self.values.copy_from_slice(values);
        Ok(())
    }

    /// Order-sensitive checksum over the raw bit patterns.
    pub fn checksum(&self) -> u64 {
        self.values.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3)
        })
    }
}

impl Default for ParamVector {
    fn default() -> Self {
        Self::new()
    }
}
