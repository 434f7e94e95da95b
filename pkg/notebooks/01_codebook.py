"""Building a set of unipolar sensor codes and looking at how much they overlap."""
import numpy as np

from codesmux import cross_correlation, generate_codebook, min_hamming_distance, validate_codebook

# ten sensors, five bit positions each; every code starts with a positive bit
book = generate_codebook(10, 5)
for c in book.codes:
    print(c.sensor_id, c)

print("valid:", validate_codebook(book).ok)
print("min Hamming distance:", min_hamming_distance(book))

# unipolar codes are not orthogonal, so cross-correlations never vanish
peaks = np.array([[cross_correlation(a, b).max() for b in book.codes] for a in book.codes])
print(peaks.astype(int))

# asking for more sensors than distinct leading-1 codes exist fails
try:
    generate_codebook(17, 5)
except ValueError as err:
    print("17 sensors:", err)
