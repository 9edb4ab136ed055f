//! Quadrature rules on reference tetrahedra and triangles, in barycentric
//! coordinates with weights normalized to sum to one. The element measure
//! multiplies the weighted sum at the call site.

/// Barycentric point and weight on a tetrahedron.
#[derive(Debug, Clone, Copy)]
pub struct TetPoint {
    pub bary: [f64; 4],
    pub weight: f64,
}

/// Barycentric point and weight on a triangle.
#[derive(Debug, Clone, Copy)]
pub struct TriPoint {
    pub bary: [f64; 3],
    pub weight: f64,
}

/// Four-point rule, exact for polynomials of degree 2.
pub const TET_DEGREE2: [TetPoint; 4] = {
    const A: f64 = 0.585_410_196_624_968_5;
    const B: f64 = 0.138_196_601_125_010_5;
    const W: f64 = 0.25;
    [
        TetPoint { bary: [A, B, B, B], weight: W },
        TetPoint { bary: [B, A, B, B], weight: W },
        TetPoint { bary: [B, B, A, B], weight: W },
        TetPoint { bary: [B, B, B, A], weight: W },
    ]
};

/// Fourteen-point rule, exact for polynomials of degree 5; used for every
/// form involving quadratic elements.
pub const TET_DEGREE5: [TetPoint; 14] = {
    const B1: f64 = 0.310_885_919_263_300_6;
    const A1: f64 = 1.0 - 3.0 * B1;
    const W1: f64 = 0.112_687_925_718_015_8;
    const B2: f64 = 0.092_735_250_310_891_23;
    const A2: f64 = 1.0 - 3.0 * B2;
    const W2: f64 = 0.073_493_043_116_361_95;
    const E: f64 = 0.045_503_704_125_649_65;
    const F: f64 = 0.5 - E;
    const W3: f64 = 0.042_546_020_777_081_47;
    [
        TetPoint { bary: [A1, B1, B1, B1], weight: W1 },
        TetPoint { bary: [B1, A1, B1, B1], weight: W1 },
        TetPoint { bary: [B1, B1, A1, B1], weight: W1 },
        TetPoint { bary: [B1, B1, B1, A1], weight: W1 },
        TetPoint { bary: [A2, B2, B2, B2], weight: W2 },
        TetPoint { bary: [B2, A2, B2, B2], weight: W2 },
        TetPoint { bary: [B2, B2, A2, B2], weight: W2 },
        TetPoint { bary: [B2, B2, B2, A2], weight: W2 },
        TetPoint { bary: [E, E, F, F], weight: W3 },
        TetPoint { bary: [E, F, E, F], weight: W3 },
        TetPoint { bary: [E, F, F, E], weight: W3 },
        TetPoint { bary: [F, E, E, F], weight: W3 },
        TetPoint { bary: [F, E, F, E], weight: W3 },
        TetPoint { bary: [F, F, E, E], weight: W3 },
    ]
};

/// Six-point rule on the triangle, exact for polynomials of degree 4.
pub const TRI_DEGREE4: [TriPoint; 6] = {
    const A1: f64 = 0.108_103_018_168_070;
    const B1: f64 = 0.445_948_490_915_965;
    const W1: f64 = 0.223_381_589_678_011;
    const A2: f64 = 0.816_847_572_980_459;
    const B2: f64 = 0.091_576_213_509_771;
    const W2: f64 = 0.109_951_743_655_322;
    [
        TriPoint { bary: [A1, B1, B1], weight: W1 },
        TriPoint { bary: [B1, A1, B1], weight: W1 },
        TriPoint { bary: [B1, B1, A1], weight: W1 },
        TriPoint { bary: [A2, B2, B2], weight: W2 },
        TriPoint { bary: [B2, A2, B2], weight: W2 },
        TriPoint { bary: [B2, B2, A2], weight: W2 },
    ]
};
