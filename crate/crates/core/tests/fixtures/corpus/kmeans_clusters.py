from sklearn.cluster import KMeans
from sklearn.datasets import make_blobs
import matplotlib.pyplot as plt

points, _ = make_blobs(n_samples=300, centers=4, random_state=0)
km = KMeans(n_clusters=4, n_init=10)
assigned = km.fit_predict(points)
plt.scatter(points[:, 0], points[:, 1], c=assigned)
plt.scatter(km.cluster_centers_[:, 0], km.cluster_centers_[:, 1], marker="x")
plt.savefig("clusters.png")
