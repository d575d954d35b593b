use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::CodecError;

/// User-facing error bound: absolute (data units) or relative to the
/// field's value range. Resolved to an absolute bound before compression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorBoundSpec {
    Absolute(f32),
    Relative(f32),
}

impl ErrorBoundSpec {
    pub fn value(&self) -> f32 {
        match self {
            ErrorBoundSpec::Absolute(v) | ErrorBoundSpec::Relative(v) => *v,
        }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let v = self.value();
        if !(v.is_finite() && v > 0.0) {
            return Err(CodecError::InvalidParam(
                "error bound must be finite and > 0".to_string(),
            ));
        }
        Ok(())
    }
}

impl Default for ErrorBoundSpec {
    fn default() -> Self {
        ErrorBoundSpec::Relative(1e-4)
    }
}

/// A field of finite 32-bit floats, optionally carrying a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatField {
    values: Vec<f32>,
    dims: Option<Vec<usize>>,
}

impl FloatField {
    /// Validating constructor: rejects empty input and NaN/Inf values.
    pub fn new(values: Vec<f32>) -> Result<Self, CodecError> {
        if values.is_empty() {
            return Err(CodecError::EmptyField);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(CodecError::NonFinite { index });
        }
        Ok(FloatField { values, dims: None })
    }

    pub fn with_dims(values: Vec<f32>, dims: Vec<usize>) -> Result<Self, CodecError> {
        let mut field = Self::new(values)?;
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(CodecError::InvalidParam("dims must be positive".to_string()));
        }
        let product: usize = dims.iter().product();
        if product != field.values.len() {
            return Err(CodecError::InvalidParam(
                "product of dims must equal element count".to_string(),
            ));
        }
        field.dims = Some(dims);
        Ok(field)
    }

    /// Constructor for values already known to be finite (codec output).
    pub(crate) fn from_trusted(values: Vec<f32>) -> Self {
        FloatField { values, dims: None }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn dims(&self) -> Option<&[usize]> {
        self.dims.as_deref()
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Value range max − min; zero for constant fields.
    pub fn range(&self) -> f32 {
        let (lo, hi) = self.min_max();
        hi - lo
    }
}

/// Resolve a bound spec to the absolute bound used by the codecs.
///
/// Relative bounds scale by the field's value range. A relative bound on
/// zero-range (constant) data resolves to the raw relative value: the data
/// is constant, so any positive bound reconstructs it exactly.
pub fn resolve_error_bound(spec: &ErrorBoundSpec, field: &FloatField) -> Result<f32, CodecError> {
    spec.validate()?;
    if field.is_empty() {
        return Err(CodecError::EmptyField);
    }
    match spec {
        ErrorBoundSpec::Absolute(v) => Ok(*v),
        ErrorBoundSpec::Relative(v) => {
            let range = field.range();
            if range == 0.0 {
                Ok(*v)
            } else {
                Ok(((*v as f64) * (range as f64)) as f32)
            }
        }
    }
}
