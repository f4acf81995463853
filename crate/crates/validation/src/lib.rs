// SPDX-License-Identifier: MIT OR Apache-2.0

//! Host package for the `acceptance` test target; it has no library code.
//! Kept separate from `covratio` so the slow suite runs after every other
//! workspace test.
