//! Rational points of bounded height on definable sets: enumeration, the
//! determinant method, and the supporting calculi for mild maps, Pfaffian
//! complexity and bounded holomorphic families.

pub mod detmethod;
pub mod funcdsl;
pub mod holofam;
pub mod mildness;
pub mod multiidx;
pub mod pfaffian;
pub mod rationals;

pub use funcdsl::{parse, Expr, RigorousValue};
pub use multiidx::MultiIndex;
pub use rationals::{height, Integer, PointCloud, QPoint, Rational};
