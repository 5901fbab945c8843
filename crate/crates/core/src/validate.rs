//! Violation reports shared by the persistent and concurrent validators.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ViolationKind {
    /// A child holds a smaller element than its parent.
    HeapOrder,
    /// Subtree sizes break `right <= left <= right + 1`.
    Braun { left: usize, right: usize },
    /// A node is reachable through more links than its snapshot count allows.
    SnapCount { count: usize, references: usize },
}

/// First invariant violation found, located by its path from the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub path: Vec<Direction>,
}

impl Violation {
    pub fn new(kind: ViolationKind, path: Vec<Direction>) -> Self {
        Violation { kind, path }
    }

    pub(crate) fn child(mut self, dir: Direction) -> Self {
        self.path.push(dir);
        self
    }
}

pub fn format_path(path: &[Direction]) -> String {
    let mut s = String::from("root");
    for d in path {
        s.push_str(match d {
            Direction::Left => ".L",
            Direction::Right => ".R",
        });
    }
    s
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = format_path(&self.path);
        match &self.kind {
            ViolationKind::HeapOrder => write!(f, "heap order violated at {at}"),
            ViolationKind::Braun { left, right } => {
                write!(f, "Braun property violated at {at}: |left|={left}, |right|={right}")
            }
            ViolationKind::SnapCount { count, references } => write!(
                f,
                "snapshot count too low at {at}: count={count}, references={references}"
            ),
        }
    }
}

impl std::error::Error for Violation {}
