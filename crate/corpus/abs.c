int abs_val(int x) {
    int r = x;
    if (x < 0) {
        r = -x;
    }
    /*@ assert r >= 0; */
    return r;
}
