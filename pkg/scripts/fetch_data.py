#!/usr/bin/env python3
"""Download the digit benchmarks into the layout the loaders expect.

    data/
      mnist/   train-images-idx3-ubyte.gz  train-labels-idx1-ubyte.gz
               t10k-images-idx3-ubyte.gz   t10k-labels-idx1-ubyte.gz
      svhn/    train_32x32.mat  test_32x32.mat
      usps/    usps.h5
      mnistm/  mnistm.npz

MNIST and SVHN are plain downloads. USPS is downloaded in LIBSVM text form
and converted to an hdf5 file with train/test groups. MNIST-M has no stable
public mirror: obtain mnist_m.tar.gz yourself (it is distributed with the
original domain-adaptation code releases) and pass --mnistm-tar to convert
it in place.

    python scripts/fetch_data.py --root data
    python scripts/fetch_data.py --root data --only mnist usps
    python scripts/fetch_data.py --root data --mnistm-tar ~/mnist_m.tar.gz
"""

from __future__ import annotations

import argparse
import bz2
import hashlib
import io
import os
import sys
import tarfile
import urllib.request

MNIST_MIRRORS = (
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
)
MNIST_FILES = (
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
)
SVHN_URL = "http://ufldl.stanford.edu/housenumbers/"
SVHN_FILES = ("train_32x32.mat", "test_32x32.mat")
USPS_URLS = {
    "train": "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass/usps.bz2",
    "test": "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass/usps.t.bz2",
}


def _download(url: str, dest: str) -> bool:
    tmp = dest + ".part"
    try:
        print(f"  {url}")
        with urllib.request.urlopen(url, timeout=120) as resp, open(tmp, "wb") as out:
            while chunk := resp.read(1 << 20):
                out.write(chunk)
        os.replace(tmp, dest)
        digest = hashlib.sha256(open(dest, "rb").read()).hexdigest()
        print(f"    ok, sha256={digest[:16]}...")
        return True
    except OSError as exc:
        print(f"    failed: {exc}")
        if os.path.exists(tmp):
            os.remove(tmp)
        return False


def fetch_mnist(root: str):
    d = os.path.join(root, "mnist")
    os.makedirs(d, exist_ok=True)
    for name in MNIST_FILES:
        dest = os.path.join(d, name)
        if os.path.exists(dest):
            print(f"  {dest} already present")
            continue
        if not any(_download(base + name, dest) for base in MNIST_MIRRORS):
            raise SystemExit(f"could not download {name} from any mirror")


def fetch_svhn(root: str):
    d = os.path.join(root, "svhn")
    os.makedirs(d, exist_ok=True)
    for name in SVHN_FILES:
        dest = os.path.join(d, name)
        if os.path.exists(dest):
            print(f"  {dest} already present")
        elif not _download(SVHN_URL + name, dest):
            raise SystemExit(f"could not download {name}")


def _parse_libsvm_digits(raw: bytes):
    import numpy as np

    images, labels = [], []
    for line in raw.decode("ascii").splitlines():
        parts = line.split()
        if not parts:
            continue
        # labels run 1..10 for digits 0..9; features are 256 values in [-1, 1]
        labels.append(int(float(parts[0])) - 1)
        vec = np.zeros(256, dtype=np.float32)
        for item in parts[1:]:
            idx, val = item.split(":")
            vec[int(idx) - 1] = float(val)
        images.append((vec + 1.0) / 2.0)
    return np.stack(images).reshape(-1, 16, 16), np.array(labels, dtype=np.int64)


def fetch_usps(root: str):
    import h5py

    d = os.path.join(root, "usps")
    os.makedirs(d, exist_ok=True)
    dest = os.path.join(d, "usps.h5")
    if os.path.exists(dest):
        print(f"  {dest} already present")
        return
    splits = {}
    for split, url in USPS_URLS.items():
        packed = dest + f".{split}.bz2"
        if not _download(url, packed):
            raise SystemExit(f"could not download usps {split} split")
        with open(packed, "rb") as fh:
            splits[split] = _parse_libsvm_digits(bz2.decompress(fh.read()))
        os.remove(packed)
    with h5py.File(dest, "w") as f:
        for split, (images, labels) in splits.items():
            grp = f.create_group(split)
            grp.create_dataset("data", data=images.reshape(len(images), -1))
            grp.create_dataset("target", data=labels)
    print(f"    wrote {dest}: train={len(splits['train'][1])} test={len(splits['test'][1])}")


def convert_mnistm(root: str, tar_path: str):
    import numpy as np
    from PIL import Image

    d = os.path.join(root, "mnistm")
    os.makedirs(d, exist_ok=True)
    dest = os.path.join(d, "mnistm.npz")
    if os.path.exists(dest):
        print(f"  {dest} already present")
        return
    arrays = {}
    with tarfile.open(tar_path) as tar:
        names = tar.getnames()
        for split in ("train", "test"):
            label_name = next(n for n in names if n.endswith(f"mnist_m_{split}_labels.txt"))
            label_map = {}
            for line in tar.extractfile(label_name).read().decode().splitlines():
                fname, lab = line.split()
                label_map[fname] = int(lab)
            images, labels = [], []
            prefix = f"mnist_m_{split}/"
            for n in sorted(names):
                base = os.path.basename(n)
                if prefix in n and base in label_map:
                    img = Image.open(io.BytesIO(tar.extractfile(n).read())).convert("RGB")
                    images.append(np.asarray(img, dtype=np.uint8))
                    labels.append(label_map[base])
            arrays[f"{split}_images"] = np.stack(images)
            arrays[f"{split}_labels"] = np.array(labels, dtype=np.int64)
            print(f"    {split}: {len(labels)} images")
    np.savez_compressed(dest, **arrays)
    print(f"    wrote {dest}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--root", default="data", help="data root directory")
    parser.add_argument(
        "--only", nargs="*", choices=("mnist", "svhn", "usps"), default=None,
        help="fetch only these datasets",
    )
    parser.add_argument(
        "--mnistm-tar", default=None, metavar="TAR",
        help="convert a locally obtained mnist_m.tar.gz into mnistm.npz",
    )
    args = parser.parse_args(argv)

    wanted = args.only or ("mnist", "svhn", "usps")
    steps = {"mnist": fetch_mnist, "svhn": fetch_svhn, "usps": fetch_usps}
    for name in wanted:
        print(f"[{name}] -> {args.root}/{name}/")
        steps[name](args.root)
    if args.mnistm_tar:
        print(f"[mnistm] converting {args.mnistm_tar}")
        convert_mnistm(args.root, args.mnistm_tar)
    elif args.only is None:
        print("[mnistm] skipped: no stable mirror; pass --mnistm-tar <mnist_m.tar.gz>")
    return 0


if __name__ == "__main__":
    sys.exit(main())
