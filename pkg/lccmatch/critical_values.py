# This file is generated by build_data.py.
# Keys are (alpha, number of methods).

BONFERRONI_DUNN_Q = {
    (0.05, 2): 1.96,
    (0.05, 3): 2.2414,
    (0.05, 4): 2.394,
    (0.05, 5): 2.4977,
    (0.05, 6): 2.5758,
    (0.05, 7): 2.6383,
    (0.05, 8): 2.6901,
    (0.05, 9): 2.7344,
    (0.05, 10): 2.7729,
    (0.1, 2): 1.6449,
    (0.1, 3): 1.96,
    (0.1, 4): 2.128,
    (0.1, 5): 2.2414,
    (0.1, 6): 2.3263,
    (0.1, 7): 2.394,
    (0.1, 8): 2.4501,
    (0.1, 9): 2.4977,
    (0.1, 10): 2.5392,
}
