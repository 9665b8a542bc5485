"""Second-order non-Markovian noise for small qubit registers."""
