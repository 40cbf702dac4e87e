struct Data {
    int vals[4];
    int len;
};

/*@ requires 0 <= d->len <= 4; */
int branch_in_loop(struct Data *d) {
    int pos = 0;
    int i = 0;
    while (i < d->len) {
        if (d->vals[i] > 0) {
            pos = pos + 1;
        }
        i = i + 1;
    }
    /*@ assert 0 <= pos <= d->len; */
    return pos;
}
