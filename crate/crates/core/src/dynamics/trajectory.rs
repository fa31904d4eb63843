use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;

/// How a flat state vector maps onto node quantities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateLayout {
    /// Unstructured vector, one column per component.
    Raw,
    /// `[re_0, im_0, re_1, im_1, …]`.
    Complex,
    /// `[x_0, v_0, x_1, v_1, …]`.
    PositionVelocity,
    /// One phase per node.
    Phase,
}

impl StateLayout {
    fn per_node(self) -> usize {
        match self {
            StateLayout::Complex | StateLayout::PositionVelocity => 2,
            StateLayout::Raw | StateLayout::Phase => 1,
        }
    }

    fn header(self) -> &'static str {
        match self {
            StateLayout::Raw => "t,index,value",
            StateLayout::Complex => "t,node,re,im",
            StateLayout::PositionVelocity => "t,node,x,v",
            StateLayout::Phase => "t,node,phi",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub layout: StateLayout,
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn new(layout: StateLayout, dim: usize) -> Self {
        Self {
            layout,
            dim,
            times: Vec::new(),
            states: Vec::new(),
            accepted: 0,
            rejected: 0,
        }
    }

    pub fn push(&mut self, t: f64, state: Vec<f64>) {
        debug_assert_eq!(state.len(), self.dim);
        self.times.push(t);
        self.states.push(state);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn nodes(&self) -> usize {
        self.dim / self.layout.per_node()
    }

    pub fn last(&self) -> Option<(f64, &[f64])> {
        Some((*self.times.last()?, self.states.last()?.as_slice()))
    }

    /// Complex value of `node` at every sample (complex layout only).
    pub fn complex_series(&self, node: usize) -> Vec<Complex64> {
        self.states
            .iter()
            .map(|s| Complex64::new(s[2 * node], s[2 * node + 1]))
            .collect()
    }

    /// Column `index` of the raw state at every sample.
    pub fn component(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[index]).collect()
    }

    pub fn write_csv_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.layout.header())?;
        let per = self.layout.per_node();
        for (t, s) in self.times.iter().zip(&self.states) {
            for (node, chunk) in s.chunks(per).enumerate() {
                write!(w, "{t},{node}")?;
                for v in chunk {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv_to(std::io::BufWriter::new(file))
    }
}
