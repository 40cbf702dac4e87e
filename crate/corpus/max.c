int max2(int a, int b) {
    int m = a;
    if (b > a) {
        m = b;
    }
    /*@ assert m >= a && m >= b; */
    return m;
}
