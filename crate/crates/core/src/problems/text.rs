//! Problem descriptions, optimization hints and pseudocode sketches.

use serde::{Deserialize, Serialize};

use super::ProblemKind;

/// Reference pseudocode attached to the strategist prompt. The two variants
/// differ only in how arrays are indexed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sketch {
    /// Flat arrays with explicit column-major index arithmetic.
    A,
    /// Two-dimensional subscripts.
    B,
}

const CONTRACT: &str = "\
Program contract:
- Write a single C11 source file. Only the C standard library and libm are available.
- The program is run as `prog <input-file> <output-file>`.
- Files are plain text: one record per line, values separated by commas, decimal floating point.
- Print a line `MEASURE_BEGIN` to standard output right before the computation starts and a line \
`MEASURE_END` right after it ends, calling fflush(stdout) after each. Only the time between the \
markers is scored. Reading input and writing output should stay outside the markers.
- Exit with status 0 on success.";

const KINETICS: &str = "\
Integrate the Robertson chemical kinetics system for many independent cells:
  dx/dt = -0.04 x + 1e4 y z
  dy/dt =  0.04 x - 1e4 y z - 3e7 y^2
  dz/dt =  3e7 y^2
The system is stiff: its time scales differ by many orders of magnitude, so explicit schemes need \
very small steps to stay stable.

Input: one cell per line, `x,y,z,dt,n_steps`. Advance the cell by n_steps steps of size dt.
Output: one line per cell, in input order, with the final `x,y,z`.
Correctness: every value must match a high-accuracy reference within a relative error of 1e-4. \
Runtime is measured for inputs from 10 up to tens of thousands of cells.";

const MATMUL: &str = "\
Compute C = A x B for dense square matrices of dimension N in double precision. All matrices \
are stored column-major: element (i, j) is at index i + j*N.

Input: line 1 holds N; line 2 holds the N*N entries of A; line 3 the N*N entries of B, each in \
column-major order.
Output: a single line with the N*N entries of C in column-major order.
Correctness: every entry must match the reference product within a relative error of 1e-6. \
Runtime is measured for N from 32 upward, doubling each time.";

const KINETICS_HINTS: &str = "\
- Cells are independent, so work can be spread across them freely.
- Implicit methods (backward Euler, BDF, Rosenbrock) allow the full step size; the Newton system \
is only 3x3 and can be solved in closed form.
- The three right-hand sides sum to zero, so x + y + z is conserved; this can replace one equation.
- Keep per-cell state in registers and lay out arrays so consecutive cells are adjacent in memory.
- Single precision in the inner loop is acceptable when the final result stays within tolerance.";

const MATMUL_HINTS: &str = "\
- Loop order matters for column-major data: keep the innermost loop walking down a column.
- Block the loops so tiles of A, B and C stay in cache; try tile sizes between 32 and 128.
- Copying tiles into contiguous buffers can reduce cache conflicts.
- Unroll the innermost loop and accumulate several outputs in local variables.
- Write code the compiler can vectorize: restrict pointers, simple bounds, aligned data.";

const KINETICS_SKETCH_A: &str = "\
# state holds all cells flat: x of cell c at 3*c, y at 3*c+1, z at 3*c+2
for c in range(n_cells):
    x, y, z = state[3*c], state[3*c+1], state[3*c+2]
    for step in range(n_steps):
        x, y, z = implicit_step(x, y, z, dt)   # Newton on a 3x3 system
    state[3*c], state[3*c+1], state[3*c+2] = x, y, z";

const KINETICS_SKETCH_B: &str = "\
# state is a 2-D array: state[c][0] = x, state[c][1] = y, state[c][2] = z
for c in range(n_cells):
    for step in range(n_steps):
        state[c][0], state[c][1], state[c][2] = implicit_step(state[c][0], state[c][1], state[c][2], dt)";

const MATMUL_SKETCH_A: &str = "\
# A, B, C are flat arrays of length N*N, element (i, j) at i + j*N
for j in range(N):
    for k in range(N):
        b = B[k + j*N]
        for i in range(N):
            C[i + j*N] += A[i + k*N] * b";

const MATMUL_SKETCH_B: &str = "\
# A, B, C are 2-D arrays indexed [row][column]
for i in range(N):
    for j in range(N):
        for k in range(N):
            C[i][j] += A[i][k] * B[k][j]";

/// Problem description including the program contract.
pub fn brief(kind: ProblemKind) -> String {
    let body = match kind {
        ProblemKind::Kinetics => KINETICS,
        ProblemKind::Matmul => MATMUL,
    };
    format!("{body}\n\n{CONTRACT}")
}

pub fn hints(kind: ProblemKind) -> &'static str {
    match kind {
        ProblemKind::Kinetics => KINETICS_HINTS,
        ProblemKind::Matmul => MATMUL_HINTS,
    }
}

pub fn sketch(kind: ProblemKind, variant: Sketch) -> &'static str {
    match (kind, variant) {
        (ProblemKind::Kinetics, Sketch::A) => KINETICS_SKETCH_A,
        (ProblemKind::Kinetics, Sketch::B) => KINETICS_SKETCH_B,
        (ProblemKind::Matmul, Sketch::A) => MATMUL_SKETCH_A,
        (ProblemKind::Matmul, Sketch::B) => MATMUL_SKETCH_B,
    }
}

/// System prompt for the implementor.
pub fn implementor_system(language: &str) -> String {
    format!(
        "You are the Implementor. You turn the Strategist's instructions into a complete, \
         compilable program. Follow the instructions and the program contract exactly. Reply with \
         the full source in one fenced ```{language} code block; text outside the block is ignored. \
         When told that a check failed, fix the program and reply with the complete corrected source."
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sketches_differ_in_indexing_only_style() {
        for kind in [ProblemKind::Kinetics, ProblemKind::Matmul] {
            let a = sketch(kind, Sketch::A);
            let b = sketch(kind, Sketch::B);
            assert_ne!(a, b);
            assert!(a.contains("*N]") || a.contains("3*c"));
            assert!(b.contains("]["));
        }
    }

    #[test]
    fn brief_carries_contract() {
        let text = brief(ProblemKind::Matmul);
        assert!(text.contains("MEASURE_BEGIN") && text.contains("column-major"));
        assert!(brief(ProblemKind::Kinetics).contains("3e7"));
    }
}
