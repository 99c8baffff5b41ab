import threading
from concurrent.futures import ThreadPoolExecutor


def square(x):
    return x * x


def report(future):
    print("done", future.result())


with ThreadPoolExecutor(max_workers=2) as pool:
    futures = [pool.submit(square, i) for i in range(5)]
    for f in futures:
        f.add_done_callback(report)

lock = threading.Lock()
worker = threading.Thread(target=lambda: print("tick"))
worker.start()
worker.join()
