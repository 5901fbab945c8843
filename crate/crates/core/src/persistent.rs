//! Purely functional Braun heap.
//!
//! Every update allocates the nodes along its path and shares the rest, so any
//! `PHeap` value is its own snapshot. This is the sequential reference that the
//! concurrent heap and the linearizability checker replay against.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use crate::error::StructureError;
use crate::validate::{Direction, Violation, ViolationKind};

/// A node of the persistent heap: either empty or an element with two children.
#[derive(Debug)]
pub enum HeapNode<T> {
    Empty,
    Branch(Arc<Branch<T>>),
}

#[derive(Debug)]
pub struct Branch<T> {
    pub elem: T,
    pub left: HeapNode<T>,
    pub right: HeapNode<T>,
}

impl<T> Clone for HeapNode<T> {
    fn clone(&self) -> Self {
        match self {
            HeapNode::Empty => HeapNode::Empty,
            HeapNode::Branch(b) => HeapNode::Branch(Arc::clone(b)),
        }
    }
}

impl<T> Default for HeapNode<T> {
    fn default() -> Self {
        HeapNode::Empty
    }
}

impl<T> HeapNode<T> {
    pub fn branch(elem: T, left: HeapNode<T>, right: HeapNode<T>) -> Self {
        HeapNode::Branch(Arc::new(Branch { elem, left, right }))
    }

    pub fn leaf(elem: T) -> Self {
        Self::branch(elem, HeapNode::Empty, HeapNode::Empty)
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, HeapNode::Empty)
    }

    pub fn as_branch(&self) -> Option<&Branch<T>> {
        match self {
            HeapNode::Empty => None,
            HeapNode::Branch(b) => Some(b),
        }
    }

    /// Number of elements in this subtree.
    pub fn size(&self) -> usize {
        match self {
            HeapNode::Empty => 0,
            HeapNode::Branch(b) => 1 + b.left.size() + b.right.size(),
        }
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            HeapNode::Empty => 0,
            HeapNode::Branch(b) => 1 + b.left.depth().max(b.right.depth()),
        }
    }

    /// Returns true if both values point at the very same node.
    pub fn ptr_eq(&self, other: &Self) -> bool {
        match (self, other) {
            (HeapNode::Empty, HeapNode::Empty) => true,
            (HeapNode::Branch(a), HeapNode::Branch(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl<T: Ord + Clone> HeapNode<T> {
    /// Inserts `elem`, keeping the smaller value at each node and pushing the
    /// larger one into the old right subtree, which becomes the new left.
    pub fn insert(&self, elem: T) -> HeapNode<T> {
        match self {
            HeapNode::Empty => HeapNode::leaf(elem),
            HeapNode::Branch(b) => {
                let (smaller, larger) = if elem < b.elem {
                    (elem, b.elem.clone())
                } else {
                    (b.elem.clone(), elem)
                };
                HeapNode::branch(smaller, b.right.insert(larger), b.left.clone())
            }
        }
    }

    /// Removes the leftmost leaf, swapping children at every level on the way
    /// down and recursing into the new right subtree.
    ///
    /// On an empty node this is a no-op returning `(Empty, None)`. A lone node
    /// called with `is_root` also yields `(Empty, None)`: the caller already
    /// holds the root element and just empties the heap.
    pub fn pull_up_left(&self, is_root: bool) -> (HeapNode<T>, Option<T>) {
        let b = match self {
            HeapNode::Empty => return (HeapNode::Empty, None),
            HeapNode::Branch(b) => b,
        };
        match &b.left {
            HeapNode::Empty => {
                let ret = if is_root { None } else { Some(b.elem.clone()) };
                (HeapNode::Empty, ret)
            }
            HeapNode::Branch(_) => {
                let (right_n, ret) = b.left.pull_up_left(false);
                (HeapNode::branch(b.elem.clone(), b.right.clone(), right_n), ret)
            }
        }
    }

    /// Sifts `elem` down into children `left` and `right` (both heaps), toward
    /// the smaller child. Ties go left.
    pub fn push_down(
        elem: T,
        left: HeapNode<T>,
        right: HeapNode<T>,
    ) -> Result<HeapNode<T>, StructureError> {
        match (&left, &right) {
            (HeapNode::Empty, HeapNode::Empty) => Ok(HeapNode::branch(elem, left, right)),
            (HeapNode::Branch(l), HeapNode::Empty) => {
                if l.elem < elem {
                    let child = HeapNode::branch(elem, l.left.clone(), l.right.clone());
                    Ok(HeapNode::branch(l.elem.clone(), child, right))
                } else {
                    Ok(HeapNode::branch(elem, left, right))
                }
            }
            (HeapNode::Branch(l), HeapNode::Branch(r)) => {
                if elem <= l.elem && elem <= r.elem {
                    Ok(HeapNode::branch(elem, left, right))
                } else if l.elem <= r.elem {
                    let child = Self::push_down(elem, l.left.clone(), l.right.clone())?;
                    Ok(HeapNode::branch(l.elem.clone(), child, right.clone()))
                } else {
                    let child = Self::push_down(elem, r.left.clone(), r.right.clone())?;
                    Ok(HeapNode::branch(r.elem.clone(), left.clone(), child))
                }
            }
            (HeapNode::Empty, HeapNode::Branch(_)) => Err(StructureError::NotBraun),
        }
    }
}

impl<T: fmt::Display> fmt::Display for HeapNode<T> {
    /// S-expression form: `.` for empty, `(elem left right)` otherwise.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeapNode::Empty => f.write_str("."),
            HeapNode::Branch(b) => write!(f, "({} {} {})", b.elem, b.left, b.right),
        }
    }
}

/// A persistent priority queue. Cloning is O(1) and never observes later updates.
#[derive(Debug)]
pub struct PHeap<T> {
    root: HeapNode<T>,
}

impl<T> Clone for PHeap<T> {
    fn clone(&self) -> Self {
        PHeap {
            root: self.root.clone(),
        }
    }
}

impl<T> Default for PHeap<T> {
    fn default() -> Self {
        PHeap {
            root: HeapNode::Empty,
        }
    }
}

impl<T> PHeap<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_root(root: HeapNode<T>) -> Self {
        PHeap { root }
    }

    pub fn root(&self) -> &HeapNode<T> {
        &self.root
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_empty()
    }

    pub fn size(&self) -> usize {
        self.root.size()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }
}

impl<T: Ord + Clone> PHeap<T> {
    pub fn insert(&self, elem: T) -> PHeap<T> {
        PHeap {
            root: self.root.insert(elem),
        }
    }

    pub fn get_min(&self) -> Option<T> {
        self.root.as_branch().map(|b| b.elem.clone())
    }

    /// Returns the heap without one occurrence of its minimum, and that minimum.
    pub fn remove_min(&self) -> (PHeap<T>, Option<T>) {
        let b = match &self.root {
            HeapNode::Empty => return (self.clone(), None),
            HeapNode::Branch(b) => b,
        };
        let rest = match self.root.pull_up_left(true) {
            (HeapNode::Empty, None) => HeapNode::Empty,
            (HeapNode::Branch(n), Some(pulled)) => {
                HeapNode::push_down(pulled, n.left.clone(), n.right.clone())
                    .expect("pull_up_left keeps the tree Braun")
            }
            _ => unreachable!("pull_up_left returns an element exactly when a node remains"),
        };
        (PHeap { root: rest }, Some(b.elem.clone()))
    }

    /// Drains a copy of the heap through `remove_min`.
    pub fn to_sorted_vec(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.size());
        let mut h = self.clone();
        while let (next, Some(x)) = h.remove_min() {
            out.push(x);
            h = next;
        }
        out
    }

    /// Checks the Braun and heap properties, returning the first violation.
    pub fn validate(&self) -> Result<(), Violation> {
        validate_node(&self.root, &mut Vec::new()).map(|_| ())
    }
}

impl<T: Ord + Clone> FromIterator<T> for PHeap<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        iter.into_iter().fold(PHeap::new(), |h, x| h.insert(x))
    }
}

// Returns the subtree size on success.
fn validate_node<T: Ord>(node: &HeapNode<T>, path: &mut Vec<Direction>) -> Result<usize, Violation> {
    let b = match node {
        HeapNode::Empty => return Ok(0),
        HeapNode::Branch(b) => b,
    };
    for (child, dir) in [(&b.left, Direction::Left), (&b.right, Direction::Right)] {
        if let Some(c) = child.as_branch() {
            if c.elem.cmp(&b.elem) == Ordering::Less {
                return Err(Violation::new(ViolationKind::HeapOrder, path.clone()).child(dir));
            }
        }
    }
    path.push(Direction::Left);
    let l = validate_node(&b.left, path)?;
    path.pop();
    path.push(Direction::Right);
    let r = validate_node(&b.right, path)?;
    path.pop();
    if !(r <= l && l <= r + 1) {
        return Err(Violation::new(
            ViolationKind::Braun { left: l, right: r },
            path.clone(),
        ));
    }
    Ok(1 + l + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heap(xs: &[i64]) -> PHeap<i64> {
        xs.iter().copied().collect()
    }

    #[test]
    fn insert_into_empty_is_leaf() {
        let h = PHeap::new().insert(5);
        assert_eq!(h.root().to_string(), "(5 . .)");
    }

    #[test]
    fn get_min_on_empty() {
        assert_eq!(PHeap::<i64>::new().get_min(), None);
        assert_eq!(PHeap::new().insert(7).get_min(), Some(7));
    }

    #[test]
    fn get_min_independent_of_order() {
        let orders = [[3, 1, 2], [3, 2, 1], [1, 3, 2], [1, 2, 3], [2, 1, 3], [2, 3, 1]];
        for o in orders {
            assert_eq!(heap(&o).get_min(), Some(1), "order {o:?}");
        }
    }

    #[test]
    fn pull_up_left_single_node() {
        let n = HeapNode::leaf(9);
        let (rest, v) = n.pull_up_left(true);
        assert!(rest.is_empty());
        assert_eq!(v, None);
        let (rest, v) = n.pull_up_left(false);
        assert!(rest.is_empty());
        assert_eq!(v, Some(9));
    }

    #[test]
    fn push_down_leaf_unchanged() {
        let n = HeapNode::push_down(4, HeapNode::Empty, HeapNode::Empty).unwrap();
        assert_eq!(n.to_string(), "(4 . .)");
    }

    #[test]
    fn push_down_tie_goes_left() {
        let n = HeapNode::push_down(5, HeapNode::leaf(3), HeapNode::leaf(3)).unwrap();
        assert_eq!(n.to_string(), "(3 (5 . .) (3 . .))");
    }

    #[test]
    fn push_down_rejects_right_only() {
        let err = HeapNode::push_down(1, HeapNode::Empty, HeapNode::leaf(2)).unwrap_err();
        assert_eq!(err, StructureError::NotBraun);
    }

    #[test]
    fn remove_min_on_empty() {
        let (h, v) = PHeap::<i64>::new().remove_min();
        assert!(h.is_empty());
        assert_eq!(v, None);
    }

    #[test]
    fn remove_min_single() {
        let (h, v) = PHeap::new().insert(3).remove_min();
        assert!(h.is_empty());
        assert_eq!(v, Some(3));
    }

    #[test]
    fn remove_min_from_six() {
        let (h, v) = heap(&[0, 1, 2, 3, 4, 5]).remove_min();
        assert_eq!(v, Some(0));
        assert_eq!(h.to_sorted_vec(), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn persistence_of_old_values() {
        let a = heap(&[4, 2, 6]);
        let b = a.insert(1);
        let (c, _) = b.remove_min();
        let _ = c.insert(0).remove_min();
        assert_eq!(a.to_sorted_vec(), vec![2, 4, 6]);
        assert_eq!(b.to_sorted_vec(), vec![1, 2, 4, 6]);
    }

    #[test]
    fn validate_reports_heap_order_with_path() {
        let bad = PHeap::from_root(HeapNode::branch(
            1,
            HeapNode::branch(2, HeapNode::leaf(0), HeapNode::Empty),
            HeapNode::leaf(3),
        ));
        let v = bad.validate().unwrap_err();
        assert_eq!(v.kind, ViolationKind::HeapOrder);
        assert_eq!(v.path, vec![Direction::Left, Direction::Left]);
    }

    #[test]
    fn validate_reports_braun() {
        let bad = PHeap::from_root(HeapNode::branch(
            1,
            HeapNode::Empty,
            HeapNode::leaf(3),
        ));
        let v = bad.validate().unwrap_err();
        assert_eq!(v.kind, ViolationKind::Braun { left: 0, right: 1 });
        assert!(v.path.is_empty());
    }
}
