//! Reference rejection rates at full scale (1000 Monte Carlo iterations), keyed by table row.

pub(crate) const TABLE1: &[(f64, &[f64])] = &[
    (0.1, &[0.122, 0.108, 0.096, 0.096, 0.108, 0.092, 0.092, 0.092, 0.092, 0.092, 0.108]),
    (0.5, &[0.092, 0.070, 0.068, 0.074, 0.064, 0.069, 0.069, 0.069, 0.069, 0.069, 0.075]),
    (1.0, &[0.079, 0.060, 0.047, 0.068, 0.056, 0.058, 0.061, 0.061, 0.061, 0.061, 0.054]),
    (2.0, &[0.073, 0.050, 0.037, 0.050, 0.050, 0.055, 0.048, 0.048, 0.048, 0.048, 0.047]),
    (3.0, &[0.073, 0.048, 0.037, 0.050, 0.050, 0.049, 0.048, 0.048, 0.048, 0.048, 0.047]),
    (4.0, &[0.073, 0.048, 0.037, 0.050, 0.050, 0.049, 0.048, 0.048, 0.048, 0.048, 0.047]),
    (f64::INFINITY, &[0.073, 0.048, 0.037, 0.050, 0.050, 0.049, 0.048, 0.048, 0.048, 0.048, 0.047]),
];

pub(crate) const TABLE2: &[(usize, usize, &[f64])] = &[
    (1, 200, &[0.060, 0.140, 0.175, 0.200, 0.185, 0.155, 0.153, 0.153, 0.153, 0.153, 0.159]),
    (1, 600, &[0.672, 0.683, 0.616, 0.482, 0.323, 0.230, 0.214, 0.214, 0.214, 0.214, 0.516]),
    (1, 1000, &[0.606, 0.729, 0.790, 0.792, 0.775, 0.738, 0.715, 0.715, 0.715, 0.715, 0.777]),
    (1, 1100, &[0.889, 0.859, 0.720, 0.504, 0.314, 0.216, 0.217, 0.217, 0.217, 0.217, 0.658]),
    (1, 2000, &[0.969, 0.988, 0.993, 0.987, 0.989, 0.979, 0.975, 0.975, 0.975, 0.975, 0.991]),
    (2, 200, &[0.030, 0.060, 0.074, 0.076, 0.076, 0.069, 0.072, 0.072, 0.072, 0.072, 0.064]),
    (2, 600, &[0.347, 0.168, 0.069, 0.054, 0.059, 0.059, 0.056, 0.056, 0.056, 0.056, 0.083]),
    (2, 1000, &[0.404, 0.379, 0.294, 0.146, 0.088, 0.059, 0.062, 0.062, 0.062, 0.062, 0.153]),
    (2, 1100, &[0.434, 0.123, 0.054, 0.059, 0.059, 0.059, 0.060, 0.060, 0.060, 0.060, 0.084]),
    (2, 2000, &[0.896, 0.897, 0.775, 0.521, 0.269, 0.177, 0.154, 0.154, 0.154, 0.154, 0.635]),
    (3, 200, &[0.087, 0.177, 0.240, 0.307, 0.325, 0.297, 0.290, 0.290, 0.290, 0.290, 0.262]),
    (3, 600, &[0.695, 0.719, 0.728, 0.693, 0.577, 0.466, 0.434, 0.434, 0.434, 0.434, 0.673]),
    (3, 1000, &[0.660, 0.743, 0.826, 0.856, 0.880, 0.887, 0.875, 0.875, 0.875, 0.875, 0.878]),
    (3, 1100, &[0.884, 0.924, 0.899, 0.773, 0.622, 0.516, 0.517, 0.517, 0.517, 0.517, 0.840]),
    (3, 2000, &[0.968, 0.985, 0.991, 0.995, 0.995, 0.998, 0.999, 0.999, 0.999, 0.999, 0.999]),
    (4, 200, &[0.038, 0.099, 0.147, 0.155, 0.148, 0.138, 0.135, 0.135, 0.135, 0.135, 0.146]),
    (4, 600, &[0.402, 0.376, 0.366, 0.290, 0.207, 0.209, 0.189, 0.189, 0.189, 0.189, 0.304]),
    (4, 1000, &[0.331, 0.433, 0.407, 0.406, 0.444, 0.475, 0.477, 0.477, 0.477, 0.477, 0.483]),
    (4, 1100, &[0.498, 0.526, 0.492, 0.355, 0.203, 0.137, 0.137, 0.137, 0.137, 0.137, 0.403]),
    (4, 2000, &[0.597, 0.704, 0.710, 0.725, 0.741, 0.769, 0.791, 0.791, 0.791, 0.791, 0.796]),
    (5, 200, &[0.365, 0.487, 0.589, 0.626, 0.685, 0.752, 0.780, 0.780, 0.780, 0.780, 0.699]),
    (5, 600, &[0.980, 0.990, 0.995, 0.997, 0.998, 0.998, 0.998, 0.998, 0.998, 0.998, 0.998]),
    (5, 1000, &[0.994, 0.998, 0.999, 0.999, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000]),
    (5, 1100, &[1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000]),
    (5, 2000, &[1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000]),
    (6, 200, &[0.372, 0.482, 0.545, 0.616, 0.659, 0.701, 0.711, 0.711, 0.711, 0.711, 0.664]),
    (6, 600, &[0.704, 0.823, 0.904, 0.929, 0.962, 0.981, 0.988, 0.988, 0.988, 0.988, 0.965]),
    (6, 1000, &[0.992, 0.999, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000]),
    (6, 1100, &[0.912, 0.957, 0.979, 0.984, 0.990, 0.995, 0.995, 0.995, 0.995, 0.995, 0.990]),
    (6, 2000, &[1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000]),
];

pub(crate) const DEGENERATE_NULL: &[(f64, &[f64])] = &[
    (0.1, &[0.117, 0.102, 0.091, 0.104, 0.100, 0.094, 0.090, 0.090, 0.090, 0.090, 0.104]),
    (0.5, &[0.080, 0.068, 0.063, 0.072, 0.071, 0.067, 0.071, 0.071, 0.071, 0.071, 0.077]),
    (1.0, &[0.073, 0.055, 0.048, 0.057, 0.064, 0.055, 0.057, 0.057, 0.057, 0.057, 0.053]),
    (2.0, &[0.066, 0.045, 0.042, 0.048, 0.052, 0.050, 0.050, 0.050, 0.050, 0.050, 0.045]),
    (3.0, &[0.066, 0.045, 0.042, 0.048, 0.052, 0.050, 0.050, 0.050, 0.050, 0.050, 0.045]),
    (4.0, &[0.066, 0.045, 0.042, 0.048, 0.052, 0.050, 0.050, 0.050, 0.050, 0.050, 0.045]),
    (f64::INFINITY, &[0.066, 0.045, 0.042, 0.048, 0.052, 0.050, 0.050, 0.050, 0.050, 0.050, 0.045]),
];

pub(crate) const UNORDERED_NULL: &[(f64, &[f64])] = &[
    (0.1, &[0.137, 0.137, 0.118, 0.102, 0.111, 0.104, 0.095, 0.120, 0.116, 0.116, 0.136]),
    (0.5, &[0.092, 0.093, 0.076, 0.082, 0.061, 0.069, 0.072, 0.084, 0.075, 0.075, 0.082]),
    (1.0, &[0.057, 0.070, 0.065, 0.067, 0.059, 0.065, 0.065, 0.055, 0.052, 0.052, 0.069]),
    (2.0, &[0.009, 0.055, 0.056, 0.061, 0.058, 0.064, 0.058, 0.045, 0.049, 0.049, 0.053]),
    (3.0, &[0.006, 0.050, 0.054, 0.061, 0.058, 0.064, 0.058, 0.045, 0.049, 0.049, 0.053]),
    (4.0, &[0.006, 0.050, 0.054, 0.061, 0.058, 0.064, 0.058, 0.045, 0.049, 0.049, 0.053]),
    (f64::INFINITY, &[0.006, 0.050, 0.054, 0.061, 0.058, 0.064, 0.058, 0.045, 0.049, 0.049, 0.053]),
];

pub(crate) const UNORDERED_POWER: &[(usize, usize, &[f64])] = &[
    (1, 200, &[0.000, 0.090, 0.188, 0.256, 0.324, 0.336, 0.326, 0.290, 0.306, 0.306, 0.222]),
    (1, 600, &[0.032, 0.402, 0.528, 0.562, 0.546, 0.502, 0.432, 0.432, 0.432, 0.432, 0.464]),
    (1, 1000, &[0.604, 0.932, 0.954, 0.976, 0.984, 0.984, 0.972, 0.966, 0.962, 0.962, 0.986]),
    (1, 1100, &[0.488, 0.594, 0.626, 0.566, 0.470, 0.448, 0.448, 0.448, 0.448, 0.448, 0.626]),
    (1, 2000, &[1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000]),
    (2, 200, &[0.000, 0.006, 0.044, 0.112, 0.134, 0.096, 0.060, 0.050, 0.044, 0.044, 0.034]),
    (2, 600, &[0.002, 0.174, 0.092, 0.048, 0.022, 0.028, 0.030, 0.030, 0.030, 0.030, 0.042]),
    (2, 1000, &[0.190, 0.624, 0.772, 0.722, 0.572, 0.358, 0.150, 0.124, 0.108, 0.108, 0.512]),
    (2, 1100, &[0.236, 0.074, 0.048, 0.036, 0.044, 0.042, 0.042, 0.042, 0.042, 0.042, 0.078]),
    (2, 2000, &[0.992, 0.998, 0.998, 0.998, 0.970, 0.898, 0.642, 0.456, 0.398, 0.398, 0.976]),
    (3, 200, &[0.000, 0.160, 0.334, 0.398, 0.452, 0.460, 0.494, 0.484, 0.490, 0.490, 0.364]),
    (3, 600, &[0.042, 0.560, 0.666, 0.786, 0.812, 0.798, 0.750, 0.750, 0.750, 0.750, 0.728]),
    (3, 1000, &[0.728, 0.926, 0.948, 0.958, 0.980, 0.986, 0.990, 0.992, 0.990, 0.990, 0.988]),
    (3, 1100, &[0.596, 0.720, 0.824, 0.860, 0.792, 0.764, 0.764, 0.764, 0.764, 0.764, 0.826]),
    (3, 2000, &[0.996, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000]),
    (4, 200, &[0.000, 0.042, 0.110, 0.150, 0.172, 0.200, 0.214, 0.214, 0.208, 0.208, 0.146]),
    (4, 600, &[0.026, 0.326, 0.382, 0.396, 0.428, 0.442, 0.414, 0.404, 0.404, 0.404, 0.436]),
    (4, 1000, &[0.210, 0.472, 0.572, 0.576, 0.618, 0.702, 0.706, 0.746, 0.774, 0.774, 0.704]),
    (4, 1100, &[0.326, 0.444, 0.530, 0.568, 0.504, 0.444, 0.444, 0.444, 0.444, 0.444, 0.580]),
    (4, 2000, &[0.790, 0.930, 0.948, 0.954, 0.962, 0.956, 0.968, 0.978, 0.982, 0.982, 0.986]),
    (5, 200, &[0.162, 0.900, 0.958, 0.968, 0.974, 0.974, 0.984, 0.988, 0.988, 0.988, 0.970]),
    (5, 600, &[0.688, 0.988, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000]),
    (5, 1000, &[1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000]),
    (5, 1100, &[0.974, 1.000, 1.000, 1.000, 1.000, 0.996, 0.996, 0.996, 0.996, 0.996, 1.000]),
    (5, 2000, &[1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000, 1.000]),
];

pub(crate) const BINARY_NULL: &[(f64, &[f64])] = &[
    (1.0, &[0.077, 0.052, 0.048, 0.069]),
    (2.0, &[0.058, 0.048, 0.040, 0.067]),
    (3.0, &[0.056, 0.046, 0.040, 0.067]),
    (4.0, &[0.056, 0.046, 0.040, 0.067]),
    (f64::INFINITY, &[0.056, 0.046, 0.040, 0.067]),
];

pub(crate) const BINARY_POWER: &[(usize, usize, &[f64])] = &[
    (1, 200, &[0.202, 0.198, 0.186, 0.110]),
    (1, 600, &[0.300, 0.434, 0.418, 0.180]),
    (1, 1000, &[0.874, 0.915, 0.919, 0.804]),
    (1, 1100, &[0.309, 0.493, 0.452, 0.163]),
    (1, 2000, &[0.997, 0.999, 1.000, 0.997]),
    (2, 200, &[0.105, 0.095, 0.059, 0.004]),
    (2, 600, &[0.261, 0.141, 0.045, 0.000]),
    (2, 1000, &[0.907, 0.814, 0.500, 0.105]),
    (2, 1100, &[0.255, 0.129, 0.037, 0.001]),
    (2, 2000, &[1.000, 0.996, 0.949, 0.674]),
    (3, 200, &[0.211, 0.209, 0.202, 0.211]),
    (3, 600, &[0.203, 0.427, 0.473, 0.351]),
    (3, 1000, &[0.664, 0.769, 0.816, 0.831]),
    (3, 1100, &[0.229, 0.442, 0.487, 0.341]),
    (3, 2000, &[0.950, 0.982, 0.992, 0.995]),
    (4, 200, &[0.080, 0.082, 0.073, 0.036]),
    (4, 600, &[0.134, 0.117, 0.103, 0.060]),
    (4, 1000, &[0.307, 0.306, 0.224, 0.127]),
    (4, 1100, &[0.146, 0.115, 0.112, 0.031]),
    (4, 2000, &[0.660, 0.703, 0.556, 0.325]),
];

pub(crate) const BINARY_POWER_BASELINE: &[(usize, usize, &[f64])] = &[
    (1, 200, &[0.198, 0.193, 0.182, 0.106]),
    (1, 600, &[0.240, 0.406, 0.375, 0.144]),
    (1, 1000, &[0.855, 0.883, 0.894, 0.714]),
    (1, 1100, &[0.263, 0.451, 0.423, 0.153]),
    (1, 2000, &[0.996, 0.999, 0.999, 0.993]),
    (2, 200, &[0.090, 0.084, 0.046, 0.003]),
    (2, 600, &[0.242, 0.100, 0.026, 0.000]),
    (2, 1000, &[0.887, 0.781, 0.421, 0.030]),
    (2, 1100, &[0.224, 0.082, 0.022, 0.001]),
    (2, 2000, &[1.000, 0.994, 0.909, 0.252]),
    (3, 200, &[0.185, 0.188, 0.195, 0.205]),
    (3, 600, &[0.191, 0.377, 0.458, 0.331]),
    (3, 1000, &[0.654, 0.739, 0.785, 0.796]),
    (3, 1100, &[0.203, 0.399, 0.443, 0.321]),
    (3, 2000, &[0.949, 0.971, 0.987, 0.992]),
    (4, 200, &[0.079, 0.082, 0.073, 0.036]),
    (4, 600, &[0.123, 0.111, 0.102, 0.058]),
    (4, 1000, &[0.307, 0.281, 0.212, 0.116]),
    (4, 1100, &[0.136, 0.115, 0.093, 0.027]),
    (4, 2000, &[0.649, 0.673, 0.505, 0.271]),
];
