use thiserror::Error;

/// A node shape that no Braun tree can have.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("this tree is not Braun: right child present without a left child")]
    NotBraun,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum HandleError {
    #[error("heap handle has already been released")]
    Released,
}
