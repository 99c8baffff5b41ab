from time import time

from sklearn.cross_validation import train_test_split
from sklearn.svm import LinearSVC

from pystruct.models import MultiClassClf
from pystruct.learners import (NSlackSSVM, OneSlackSSVM,
                               SubgradientSSVM, FrankWolfeSSVM)

digits = load_digits()
X, y = digits.data, digits.target
X = X / 16.
X_train, X_test, y_train, y_test = train_test_split(X, y)

# we add a constant 1 feature for the bias
X_train_bias = np.hstack([X_train, np.ones((X_train.shape[0], 1))])
X_test_bias = np.hstack([X_test, np.ones((X_test.shape[0], 1))])

model = MultiClassClf(n_features=X_train_bias.shape[1], n_classes=10)
fw_bc_svm = FrankWolfeSSVM(model, C=.1, max_iter=50)
libsvm = LinearSVC(multi_class='crammer_singer', C=.1)

start = time()
libsvm.fit(X_train, y_train)
time_libsvm = time() - start
print("Score with sklearn and libsvm: %f (took %f seconds)"
      % (libsvm.score(X_test, y_test), time_libsvm))

start = time()
fw_bc_svm.fit(X_train_bias, y_train)
time_fw_bc_svm = time() - start
print("Score with pystruct frank wolfe ssvm: %f (took %f seconds)"
      % (fw_bc_svm.score(X_test_bias, y_test), time_fw_bc_svm))
