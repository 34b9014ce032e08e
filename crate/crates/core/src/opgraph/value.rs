use crate::spectral::{CotangentField, Field};
use crate::{Error, Result, C64};

/// Primal value carried by a graph node. Fields are kept in coefficient layout.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Scalar(C64),
    Field(Field),
}

/// Cotangent carried by a graph node. Fields are kept in coefficient layout.
#[derive(Clone, Debug, PartialEq)]
pub enum CotValue {
    Scalar(C64),
    Field(CotangentField),
}

impl Value {
    pub fn as_scalar(&self) -> Result<C64> {
        match self {
            Value::Scalar(s) => Ok(*s),
            Value::Field(_) => Err(Error::contract("expected a scalar value, found a field")),
        }
    }

    pub fn as_field(&self) -> Result<&Field> {
        match self {
            Value::Field(f) => Ok(f),
            Value::Scalar(_) => Err(Error::contract("expected a field value, found a scalar")),
        }
    }

    /// Flat coefficient view (length 1 for scalars).
    pub fn coeffs(&self) -> &[C64] {
        match self {
            Value::Scalar(s) => std::slice::from_ref(s),
            Value::Field(f) => f.data(),
        }
    }

}

impl CotValue {
    pub fn as_scalar(&self) -> Result<C64> {
        match self {
            CotValue::Scalar(s) => Ok(*s),
            CotValue::Field(_) => Err(Error::contract("expected a scalar cotangent, found a field")),
        }
    }

    pub fn as_field(&self) -> Result<&CotangentField> {
        match self {
            CotValue::Field(f) => Ok(f),
            CotValue::Scalar(_) => Err(Error::contract("expected a field cotangent, found a scalar")),
        }
    }

    /// Flat coefficient view (length 1 for scalars).
    pub fn coeffs(&self) -> &[C64] {
        match self {
            CotValue::Scalar(s) => std::slice::from_ref(s),
            CotValue::Field(f) => f.data(),
        }
    }
}
