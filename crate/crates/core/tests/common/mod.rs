//! Frozen CIEDE2000 values for the standard test pairs, computed with an
//! independent implementation.

pub const PAIRS: [([f64; 3], [f64; 3], f64); 34] = [
    ([50.0, 2.6772, -79.7751], [50.0, 0.0, -82.7485], 2.0424596802),
    ([50.0, 3.1571, -77.2803], [50.0, 0.0, -82.7485], 2.8615101747),
    ([50.0, 2.8361, -74.0200], [50.0, 0.0, -82.7485], 3.4411905987),
    ([50.0, -1.3802, -84.2814], [50.0, 0.0, -82.7485], 0.9999988648),
    ([50.0, -1.1848, -84.8006], [50.0, 0.0, -82.7485], 1.0000047011),
    ([50.0, -0.9009, -85.5211], [50.0, 0.0, -82.7485], 1.0000129676),
    ([50.0, 0.0, 0.0], [50.0, -1.0, 2.0], 2.3668588192),
    ([50.0, -1.0, 2.0], [50.0, 0.0, 0.0], 2.3668588192),
    ([50.0, 2.49, -0.001], [50.0, -2.49, 0.0009], 7.1791720113),
    ([50.0, 2.49, -0.001], [50.0, -2.49, 0.0010], 7.1791626400),
    ([50.0, 2.49, -0.001], [50.0, -2.49, 0.0011], 7.2194721523),
    ([50.0, 2.49, -0.001], [50.0, -2.49, 0.0012], 7.2194742125),
    ([50.0, -0.001, 2.49], [50.0, 0.0009, -2.49], 4.8045216858),
    ([50.0, -0.001, 2.49], [50.0, 0.0010, -2.49], 4.8045245082),
    ([50.0, -0.001, 2.49], [50.0, 0.0011, -2.49], 4.7460711138),
    ([50.0, 2.5, 0.0], [50.0, 0.0, -2.5], 4.3064820958),
    ([50.0, 2.5, 0.0], [73.0, 25.0, -18.0], 27.1492313007),
    ([50.0, 2.5, 0.0], [61.0, -5.0, 29.0], 22.8976924698),
    ([50.0, 2.5, 0.0], [56.0, -27.0, -3.0], 31.9030046469),
    ([50.0, 2.5, 0.0], [58.0, 24.0, 15.0], 19.4535214334),
    ([50.0, 2.5, 0.0], [50.0, 3.1736, 0.5854], 1.0000263434),
    ([50.0, 2.5, 0.0], [50.0, 3.2972, 0.0], 0.9999728730),
    ([50.0, 2.5, 0.0], [50.0, 1.8634, 0.5757], 1.0000494990),
    ([50.0, 2.5, 0.0], [50.0, 3.2592, 0.3350], 1.0000347617),
    ([60.2574, -34.0099, 36.2677], [60.4626, -34.1751, 39.4387], 1.2644200136),
    ([63.0109, -31.0961, -5.8663], [62.8187, -29.7946, -4.0864], 1.2629592983),
    ([61.2901, 3.7196, -5.3901], [61.4292, 2.2480, -4.9620], 1.8730705001),
    ([35.0831, -44.1164, 3.7933], [35.0232, -40.0716, 1.5901], 1.8644952342),
    ([22.7233, 20.0904, -46.6940], [23.0331, 14.9730, -42.5619], 2.0372582697),
    ([36.4612, 47.8580, 18.3852], [36.2715, 50.5065, 21.2231], 1.4145779225),
    ([90.8027, -2.0831, 1.4410], [91.1528, -1.6435, 0.0447], 1.4441290781),
    ([90.9257, -0.5406, -0.9208], [88.6381, -0.8985, -0.7239], 1.5381170054),
    ([6.7747, -0.2908, -2.4247], [5.8714, -0.0985, -2.2286], 0.6377276719),
    ([2.0776, 0.0795, -1.1350], [0.9033, -0.0636, -0.5514], 0.9082328396),
];
