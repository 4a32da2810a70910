#pragma once

#include <vector>

#include "osmid/ad/tape.hpp"

namespace osmid::ad {

// Elementwise
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var relu(Var a);
Var leaky_relu(Var a, double alpha = 0.01);
Var silu(Var a);
Var sigmoid(Var a);

// Linear algebra. Matrices are row-major [rows, cols].
Var matmul(Var a, Var b);                  // [m,k]·[k,n] -> [m,n]
Var matmul_nt(Var a, Var b);               // [m,k]·[n,k]^T -> [m,n]
Var add_rowbias(Var x, Var b);             // [n,m] + [m]
Var linear(Var x, Var w, Var b);           // [n,k]·[k,m] + [m]

// Feature maps, channel-last [H,W,C].
Var conv2d(Var x, Var w, Var b, int stride, int pad);  // w: [kh,kw,Cin,Cout]
Var pad_edge(Var x, int p);                            // replicate borders
Var resize_bilinear(Var x, int out_h, int out_w);      // align-corners-off
Var group_norm(Var x, Var gamma, Var beta, int groups, double eps = 1e-5);
Var add_bias_c(Var x, Var b);              // [H,W,C] + [C]
Var mul_bcast_c(Var x, Var g);             // [H,W,C] * [C]
Var mul_bcast_hw(Var x, Var g);            // [H,W,C] * [H,W,1]
Var concat_c(Var a, Var b);                // channel concat
Var spatial_mean(Var x);                   // [H,W,C] -> [C]
Var spatial_max(Var x);                    // [H,W,C] -> [C]
Var channel_mean(Var x);                   // [H,W,C] -> [H,W,1]
Var channel_max(Var x);                    // [H,W,C] -> [H,W,1]

// Points are (x, y) in map cell coordinates; gradient flows to the map.
Var sample_bilinear_points(Var x, const std::vector<std::pair<double, double>>& pts);

// Vectors / reductions
Var softmax_vec(Var x);                    // [n] -> [n]
Var row_logsumexp(Var x);                  // [n,m] -> [n]
Var take_diag(Var x);                      // [n,n] -> [n]
Var mean_all(Var x);                       // -> [1]
Var sum_all(Var x);                        // -> [1]
Var l2_normalize_rows(Var x, double eps = 1e-12);
Var scale_by_vec_elem(Var x, Var v, int idx);  // x * v[idx]
Var reshape(Var x, std::vector<int> shape);

Var constant(Tape& t, Tensor v);

}  // namespace osmid::ad
