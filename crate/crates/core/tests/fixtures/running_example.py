debug_level = 3

if debug_level > 5:
    def fd(model, test, train):
        assert len(test) < 500
        model.fit(train, test)
    fitit = fd

else:
    fitit = lambda model, test, train: model.fit(train, test)

from sklearn.svm import LinearSVC

from pystruct.models import MultiClassClf
from pystruct.learners import (NSlackSSVM, OneSlackSSVM, SubgradientSSVM, FrankWolfeSSVM)

digits = load_digits()
X, y = digits.data, digits.target
X = X / 16.
X_train, X_test, y_train, y_test = train_test_split(X, y)

# we add a constant 1 feature for the bias
X_train_bias = np.hstack([X_train, np.ones((X_train.shape[0], 1))])

model = MultiClassClf(n_features=X_train_bias.shape[1], n_classes=10)
fw_bc_svm = FrankWolfeSSVM(model, C=.1, max_iter=50)

libsvm = LinearSVC(multi_class='crammer_singer', C=.1)
fitit(libsvm, X_train, y_train)

fitit(fw_bc_svm, X_train_bias, y_train)
